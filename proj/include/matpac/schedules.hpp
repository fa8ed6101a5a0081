#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "matpac/error.hpp"
#include "matpac/tensor.hpp"

namespace matpac {

inline constexpr double kTauTeacherStart = 0.04;
inline constexpr double kTauTeacherEnd = 0.07;
inline constexpr double kZetaStart = 0.998;
inline constexpr double kZetaEnd = 1.0;

/// target <- decay * target + (1 - decay) * source, entry by entry.
template <class T>
void ema_update(ParameterStore<T>& target, const ParameterStore<T>& source, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw DomainError("ema_update: decay must lie in [0, 1]");
  if (!target.same_layout(source)) throw ShapeError("ema_update: target and source layouts differ");
  const T d = static_cast<T>(decay);
  const T s = T(1) - d;
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target[i].second;
    t = d * t + s * source[i].second;
  }
}

/// Teacher temperature: linear 0.04 -> 0.07 over n_tau_epochs, then flat.
inline double tau_t_schedule(double epoch, double n_tau_epochs) {
  if (epoch < 0.0) throw DomainError("tau_t_schedule: negative epoch");
  if (!(n_tau_epochs >= 1.0)) throw DomainError("tau_t_schedule: n_tau_epochs must be >= 1");
  const double f = std::min(epoch / n_tau_epochs, 1.0);
  return std::lerp(kTauTeacherStart, kTauTeacherEnd, f);
}

/// Head EMA decay: linear 0.998 -> 1 across the whole run.
inline double zeta_schedule(double epoch, double total_epochs) {
  if (!(total_epochs >= 1.0)) throw DomainError("zeta_schedule: total_epochs must be >= 1");
  if (epoch < 0.0 || epoch > total_epochs) throw DomainError("zeta_schedule: epoch outside [0, total_epochs]");
  return std::lerp(kZetaStart, kZetaEnd, epoch / total_epochs);
}

/// Encoder EMA decay: linear lambda_start -> lambda_end across the run.
inline double lambda_schedule(double epoch, double total_epochs, double lambda_start, double lambda_end) {
  if (!(0.0 <= lambda_start && lambda_start <= lambda_end && lambda_end <= 1.0))
    throw DomainError("lambda_schedule: need 0 <= start <= end <= 1");
  if (!(total_epochs >= 1.0)) throw DomainError("lambda_schedule: total_epochs must be >= 1");
  if (epoch < 0.0 || epoch > total_epochs) throw DomainError("lambda_schedule: epoch outside [0, total_epochs]");
  return std::lerp(lambda_start, lambda_end, epoch / total_epochs);
}

enum class LrShape { cosine, constant };

/// Linear warm-up 0 -> base_lr, then cosine decay to 0 (or flat for LrShape::constant).
inline double lr_schedule(double epoch, double warmup_epochs, double total_epochs, double base_lr,
                          LrShape shape = LrShape::cosine) {
  if (!(warmup_epochs < total_epochs)) throw DomainError("lr_schedule: warmup must be shorter than training");
  if (epoch < 0.0) throw DomainError("lr_schedule: negative epoch");
  if (epoch < warmup_epochs) return base_lr * epoch / warmup_epochs;
  if (shape == LrShape::constant) return base_lr;
  const double f = std::min((epoch - warmup_epochs) / (total_epochs - warmup_epochs), 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

struct ScheduleConfig {
  int total_epochs = 50;
  int warmup_epochs = 5;
  int n_tau_epochs = 10;
  double base_lr = 3e-4;
  double lambda_start = 0.99995;
  double lambda_end = 0.99999;
  LrShape lr_shape = LrShape::cosine;
};

struct ScheduleValues {
  double lr = 0.0;
  double lambda = 1.0;
  double zeta = 1.0;
  double tau_t = kTauTeacherStart;
};

/// All schedules at a (fractional) epoch, e.g. epoch + step / steps_per_epoch.
inline ScheduleValues schedule_at(const ScheduleConfig& c, double epoch) {
  const double e = std::clamp(epoch, 0.0, static_cast<double>(c.total_epochs));
  return ScheduleValues{lr_schedule(e, c.warmup_epochs, c.total_epochs, c.base_lr, c.lr_shape),
                        lambda_schedule(e, c.total_epochs, c.lambda_start, c.lambda_end),
                        zeta_schedule(e, c.total_epochs), tau_t_schedule(e, c.n_tau_epochs)};
}

}  // namespace matpac
