#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "matpac/error.hpp"

namespace matpac {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// Derives an independent generator from a base seed and a list of stream ids.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
template <class T>
T truncated_normal(Rng& rng, T stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (;;) {
    double v = dist(rng);
    if (v >= -2.0 && v <= 2.0) return static_cast<T>(v * static_cast<double>(stddev));
  }
}

template <class T>
Matrix<T> truncated_normal_matrix(Index rows, Index cols, T stddev, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = truncated_normal<T>(rng, stddev);
  return m;
}

/// Glorot/Xavier uniform init for a [fan_in x fan_out] weight.
template <class T>
Matrix<T> xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<T> m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <class T>
bool all_finite(const Matrix<T>& m) {
  return m.allFinite();
}

/// Ordered collection of named parameter matrices.
///
/// Order is insertion order and is part of the checkpoint layout, so two
/// stores built by the same code always serialize identically.
template <class T>
class ParameterStore {
 public:
  using Entry = std::pair<std::string, Matrix<T>>;

  Matrix<T>& add(std::string name, Matrix<T> value) {
    if (find(name) != nullptr) throw ShapeError("duplicate parameter '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(value));
    return entries_.back().second;
  }

  const Matrix<T>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return &e.second;
    return nullptr;
  }
  Matrix<T>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.first == name) return &e.second;
    return nullptr;
  }

  const Matrix<T>& at(const std::string& name) const {
    const auto* p = find(name);
    if (p == nullptr) throw ShapeError("unknown parameter '" + name + "'");
    return *p;
  }
  Matrix<T>& at(const std::string& name) {
    auto* p = find(name);
    if (p == nullptr) throw ShapeError("unknown parameter '" + name + "'");
    return *p;
  }

  std::size_t size() const { return entries_.size(); }
  Index total_elements() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  /// True when both stores have the same names in the same order with equal shapes.
  bool same_layout(const ParameterStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.first != b.first || a.second.rows() != b.second.rows() || a.second.cols() != b.second.cols())
        return false;
    }
    return true;
  }

  bool operator==(const ParameterStore& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].second != other.entries_[i].second) return false;
    return true;
  }

  ParameterStore zeros_like() const {
    ParameterStore out;
    for (const auto& e : entries_) out.add(e.first, Matrix<T>::Zero(e.second.rows(), e.second.cols()));
    return out;
  }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) out.add(e.first, e.second.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

/// Gathers rows of `m` in the order given by `idx`.
template <class T>
Matrix<T> gather_rows(const Matrix<T>& m, std::span<const int> idx) {
  Matrix<T> out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= m.rows())
      throw ShapeError("row index " + std::to_string(idx[i]) + " out of range for " + std::to_string(m.rows()) +
                       " rows");
    out.row(static_cast<Index>(i)) = m.row(idx[i]);
  }
  return out;
}

}  // namespace matpac
