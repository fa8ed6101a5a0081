#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "matpac/tensor.hpp"

namespace matpac {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  /// Parameters whose qualified name ends with one of these get no weight decay.
  std::vector<std::string> no_decay_suffixes = {".b", ".g", "pos", "mask_token"};
  /// Parameters whose qualified name ends with one of these are never updated.
  std::vector<std::string> frozen_suffixes = {"head.last.g"};
};

inline bool ends_with_any(const std::string& name, const std::vector<std::string>& suffixes) {
  for (const auto& s : suffixes)
    if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return true;
  return false;
}

/// A parameter store being optimized together with its gradients, under a name prefix.
template <class T>
struct ParamGroup {
  std::string prefix;
  ParameterStore<T>* params;
  const ParameterStore<T>* grads;
};

/// Adam with decoupled weight decay. Moment buffers are created lazily and kept in
/// first-seen order, so the serialized state is deterministic.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(std::move(config)) {}

  void step(std::span<const ParamGroup<T>> groups, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    for (const auto& g : groups) {
      if (!g.params->same_layout(*g.grads)) throw ShapeError("AdamW: gradient layout mismatch for " + g.prefix);
      for (std::size_t i = 0; i < g.params->size(); ++i) {
        const std::string name = g.prefix + (*g.params)[i].first;
        if (ends_with_any(name, config_.frozen_suffixes)) continue;
        auto& p = (*g.params)[i].second;
        const auto& grad = (*g.grads)[i].second;
        auto& m = moment(m_, name, p);
        auto& v = moment(v_, name, p);
        m = b1 * m + (T(1) - b1) * grad;
        v = (b2 * v.array() + (T(1) - b2) * grad.array().square()).matrix();
        const bool decay = config_.weight_decay > 0.0 && !ends_with_any(name, config_.no_decay_suffixes);
        if (decay) p *= static_cast<T>(1.0 - lr * config_.weight_decay);
        const T step_size = static_cast<T>(lr / bc1);
        const T inv_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
        const T eps = static_cast<T>(config_.eps);
        p.array() -= step_size * m.array() / (v.array().sqrt() * inv_bc2 + eps);
      }
    }
  }

  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  const ParameterStore<T>& first_moments() const { return m_; }
  const ParameterStore<T>& second_moments() const { return v_; }

  void restore(std::int64_t steps, ParameterStore<T> m, ParameterStore<T> v) {
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  static Matrix<T>& moment(ParameterStore<T>& store, const std::string& name, const Matrix<T>& like) {
    if (auto* p = store.find(name)) return *p;
    return store.add(name, Matrix<T>::Zero(like.rows(), like.cols()));
  }

  AdamWConfig config_;
  std::int64_t t_ = 0;
  ParameterStore<T> m_;
  ParameterStore<T> v_;
};

}  // namespace matpac
