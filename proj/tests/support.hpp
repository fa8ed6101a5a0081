#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "matpac/autograd.hpp"
#include "matpac/tensor.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("matpac_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Relative error with an absolute floor, so entries whose true gradient is ~0
/// are judged on absolute agreement.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences of `f` w.r.t. every entry of `store`, compared with `analytic`.
inline GradCheck check_store(matpac::ParameterStore<double>& store, const matpac::ParameterStore<double>& analytic,
                             const std::function<double()>& f, const std::string& label, double h = 1e-5,
                             double floor = 1e-6) {
  GradCheck r;
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& m = store[p].second;
    const auto& g = analytic[p].second;
    for (matpac::Index i = 0; i < m.size(); ++i) {
      const double keep = m.data()[i];
      m.data()[i] = keep + h;
      const double up = f();
      m.data()[i] = keep - h;
      const double down = f();
      m.data()[i] = keep;
      const double num = (up - down) / (2.0 * h);
      const double e = rel_err(g.data()[i], num, floor);
      ++r.checked;
      if (e > r.max_rel) {
        r.max_rel = e;
        r.worst = label + store[p].first + "[" + std::to_string(i) + "] analytic=" + std::to_string(g.data()[i]) +
                  " numeric=" + std::to_string(num);
      }
    }
  }
  return r;
}

inline matpac::Matrix<double> random_matrix(matpac::Index r, matpac::Index c, std::uint64_t seed, double scale = 1.0) {
  matpac::Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  return matpac::Matrix<double>::NullaryExpr(r, c, [&]() { return n(rng); });
}

/// Scalar sum_ij y_ij * R_ij built from tape ops, so every entry of y feeds the root.
template <class T>
matpac::Var readout(matpac::Tape<T>& t, matpac::Var y, const matpac::Matrix<T>& R) {
  matpac::Var acc{};
  for (matpac::Index i = 0; i < R.rows(); ++i) {
    matpac::Var row = matpac::ops::gather_rows(t, y, std::vector<int>{static_cast<int>(i)});
    matpac::Var term = matpac::ops::matmul(t, row, t.constant(matpac::Matrix<T>(R.row(i).transpose())));
    acc = i == 0 ? term : matpac::ops::add(t, acc, term);
  }
  return acc;
}

}  // namespace testing_support
