#pragma once

// Synthetic four-class sound corpus for offline runs and tests.
//
//   tone   harmonic stack with vibrato and a slow amplitude envelope
//   chirp  sweeping sinusoid with two harmonics
//   noise  dense band of random-phase partials
//   pulse  train of short decaying resonant pings
//
// Every clip gets its own random parameters, gain and a low background hiss.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "matpac/error.hpp"
#include "matpac/frontend.hpp"
#include "matpac/manifest.hpp"
#include "matpac/tensor.hpp"
#include "matpac/wav.hpp"

namespace matpac::synth {

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"chirp", "noise", "pulse", "tone"};
  return names;
}

/// One clip of class `cls` (index into class_names()).
inline std::vector<float> render(int cls, double duration_s, Rng& rng) {
  if (cls < 0 || cls >= 4) throw DomainError("synth: class index out of range");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kSampleRate));
  const double fs = kSampleRate;
  const double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
  std::vector<double> x(n, 0.0);

  switch (cls) {
    case 0: {  // chirp
      const bool up = U(rng) < 0.5;
      const double f_lo = uni(200.0, 600.0), f_hi = uni(2000.0, 5000.0);
      const double period = uni(0.4, 1.0);
      double phase = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double frac = std::fmod(static_cast<double>(i) / fs, period) / period;
        if (!up) frac = 1.0 - frac;
        const double f = f_lo * std::pow(f_hi / f_lo, frac);
        phase += two_pi * f / fs;
        x[i] = std::sin(phase) + 0.3 * std::sin(2.0 * phase);
      }
      break;
    }
    case 1: {  // noise band
      const double center = uni(800.0, 5000.0);
      const double width = uni(0.3, 0.8) * center;
      const int partials = 80;
      std::vector<double> f(partials), ph(partials);
      for (int k = 0; k < partials; ++k) {
        f[k] = center + width * (U(rng) - 0.5);
        ph[k] = two_pi * U(rng);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        double acc = 0.0;
        for (int k = 0; k < partials; ++k) acc += std::sin(two_pi * f[k] * t + ph[k]);
        x[i] = acc / std::sqrt(static_cast<double>(partials));
      }
      break;
    }
    case 2: {  // pulse train
      const double rate = uni(4.0, 12.0);
      const double res = uni(600.0, 4000.0);
      const double decay = uni(30.0, 80.0);
      const double offset = uni(0.0, 1.0 / rate);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double since = std::fmod(t + 1.0 / rate - offset, 1.0 / rate);
        x[i] = std::exp(-decay * since) * std::sin(two_pi * res * since);
      }
      break;
    }
    case 3: {  // harmonic tone
      const double f0 = uni(150.0, 500.0);
      const double vib_rate = uni(3.0, 7.0), vib_depth = uni(0.005, 0.02);
      const double trem = uni(0.5, 2.0);
      const int harmonics = 6;
      double phase = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double f = f0 * (1.0 + vib_depth * std::sin(two_pi * vib_rate * t));
        phase += two_pi * f / fs;
        double acc = 0.0;
        for (int h = 1; h <= harmonics; ++h) acc += std::sin(h * phase) / h;
        x[i] = acc * (0.75 + 0.25 * std::sin(two_pi * trem * t));
      }
      break;
    }
  }

  double peak = 1e-12;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = uni(0.2, 0.8) / peak;
  std::normal_distribution<double> hiss(0.0, uni(0.002, 0.01));
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(std::clamp(gain * x[i] + hiss(rng), -1.0, 1.0));
  return out;
}

struct ToyDatasetOptions {
  int n_clips = 200;
  double duration_s = 2.0;
  std::uint64_t seed = 0;
  int folds = 5;
  std::string prefix = "clip";
};

struct ToyDataset {
  std::filesystem::path dir;
  std::filesystem::path pretrain_manifest;  ///< path,labels
  std::filesystem::path tvt_manifest;       ///< path,labels,split (60/20/20 per class)
  std::filesystem::path kfold_manifest;     ///< path,labels,fold
};

/// Writes 16-bit WAV clips (classes interleaved so every prefix is balanced) and three manifests.
inline ToyDataset generate_toy_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& opt = {}) {
  if (opt.n_clips < 4) throw DomainError("synth: need at least one clip per class");
  if (opt.folds < 2) throw DomainError("synth: need at least two folds");
  std::filesystem::create_directories(dir / "audio");
  Manifest pre, tvt, kfold;
  tvt.has_split = true;
  kfold.has_fold = true;
  const auto& names = class_names();
  for (int i = 0; i < opt.n_clips; ++i) {
    const int cls = i % 4;
    const int rank = i / 4;  // index within the class
    Rng rng = derive_rng(opt.seed, {0x5E7, static_cast<std::uint64_t>(i)});
    wav::Audio a{kSampleRate, 1, render(cls, opt.duration_s, rng)};
    char name[96];
    std::snprintf(name, sizeof name, "audio/%s_%04d_%s.wav", opt.prefix.c_str(), i, names[cls].c_str());
    const auto path = dir / name;
    wav::write(path.string(), a);
    const std::string abs = std::filesystem::absolute(path).string();
    pre.entries.push_back({abs, {names[cls]}, {}, std::nullopt});
    const int per_class = (opt.n_clips - cls + 3) / 4;
    const double q = static_cast<double>(rank) / per_class;
    tvt.entries.push_back({abs, {names[cls]}, q < 0.6 ? "train" : q < 0.8 ? "valid" : "test", std::nullopt});
    kfold.entries.push_back({abs, {names[cls]}, {}, rank % opt.folds + 1});
  }
  ToyDataset out{dir, dir / "pretrain.csv", dir / "tvt.csv", dir / "kfold.csv"};
  write_manifest(out.pretrain_manifest, pre);
  write_manifest(out.tvt_manifest, tvt);
  write_manifest(out.kfold_manifest, kfold);
  return out;
}

}  // namespace matpac::synth
