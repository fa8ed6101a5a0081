#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "matpac/error.hpp"

namespace matpac {

/// Rational-ratio resampler using a Kaiser-windowed sinc, evaluated as a polyphase bank.
///
/// The filter bank is precomputed for the reduced ratio up/down; each output sample
/// uses 2 * zero_crossings / cutoff input taps. Every phase is normalized to unit DC gain.
class PolyphaseResampler {
 public:
  PolyphaseResampler(int in_rate, int out_rate, int zero_crossings = 16, double kaiser_beta = 8.6) {
    if (in_rate <= 0 || out_rate <= 0) throw DomainError("resampler: rates must be positive");
    const int g = std::gcd(in_rate, out_rate);
    up_ = out_rate / g;
    down_ = in_rate / g;
    const double cutoff = std::min(1.0, static_cast<double>(up_) / down_) * 0.97;
    half_taps_ = static_cast<int>(std::ceil(zero_crossings / cutoff));
    const int taps = 2 * half_taps_;
    const double i0_beta = std::cyl_bessel_i(0.0, kaiser_beta);
    bank_.assign(static_cast<std::size_t>(up_) * taps, 0.0);
    for (int p = 0; p < up_; ++p) {
      const double frac = static_cast<double>(p) / up_;
      double total = 0.0;
      for (int j = 0; j < taps; ++j) {
        const int offset = j - half_taps_ + 1;  // input index relative to floor(t)
        const double x = frac - offset;         // distance from the output instant, input samples
        const double r = x / (half_taps_);
        double w = 0.0;
        if (std::abs(r) < 1.0) w = std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
        const double arg = std::numbers::pi * cutoff * x;
        const double s = x == 0.0 ? 1.0 : std::sin(arg) / arg;
        const double h = cutoff * s * w;
        bank_[static_cast<std::size_t>(p) * taps + j] = h;
        total += h;
      }
      for (int j = 0; j < taps; ++j) bank_[static_cast<std::size_t>(p) * taps + j] /= total;
    }
  }

  std::vector<float> process(const std::vector<float>& in) const {
    if (up_ == down_) return in;
    const auto n_in = static_cast<std::int64_t>(in.size());
    const std::int64_t n_out = (n_in * up_ + down_ - 1) / down_;
    const int taps = 2 * half_taps_;
    std::vector<float> out(static_cast<std::size_t>(n_out));
    for (std::int64_t n = 0; n < n_out; ++n) {
      const std::int64_t num = n * down_;
      const std::int64_t base = num / up_;
      const auto phase = static_cast<std::size_t>(num % up_);
      const double* h = bank_.data() + phase * taps;
      double acc = 0.0;
      for (int j = 0; j < taps; ++j) {
        const std::int64_t k = base + j - half_taps_ + 1;
        if (k >= 0 && k < n_in) acc += h[j] * in[static_cast<std::size_t>(k)];
      }
      out[static_cast<std::size_t>(n)] = static_cast<float>(acc);
    }
    return out;
  }

  int up() const { return up_; }
  int down() const { return down_; }

 private:
  int up_ = 1;
  int down_ = 1;
  int half_taps_ = 1;
  std::vector<double> bank_;
};

inline std::vector<float> resample(const std::vector<float>& in, int in_rate, int out_rate) {
  if (in_rate == out_rate) return in;
  return PolyphaseResampler(in_rate, out_rate).process(in);
}

}  // namespace matpac
