#pragma once

// Audio ingestion, log-mel analysis and 16x16 patch extraction.
//
// Conventions used everywhere downstream:
//   * 16 kHz mono, 25 ms Hann window (400 samples), 10 ms hop (160), 512-point FFT,
//     no centre padding: frames = 1 + floor((n - 400) / 160).
//   * 80 triangular mel filters on the HTK mel scale between 50 and 8000 Hz,
//     each scaled to unit area (2 / bandwidth), applied to the power spectrum.
//   * log(mel + 1e-5).
//   * Patch sequence index = time_patch * 5 + freq_patch (frequency varies fastest);
//     inside a patch values are stored frequency-major: element = row * 16 + col.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "matpac/error.hpp"
#include "matpac/manifest.hpp"
#include "matpac/resample.hpp"
#include "matpac/tensor.hpp"
#include "matpac/wav.hpp"

namespace matpac {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindow = 400;
inline constexpr int kHop = 160;
inline constexpr int kFftSize = 512;
inline constexpr int kMelBins = 80;
inline constexpr double kMelLow = 50.0;
inline constexpr double kMelHigh = 8000.0;
inline constexpr double kLogFloor = 1e-5;
inline constexpr int kPatch = 16;
inline constexpr int kPatchDim = kPatch * kPatch;
inline constexpr int kFreqPatches = kMelBins / kPatch;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct LogMelSpec {
  Matrix<float> values;  ///< [80 x n_frames]
  bool standardized = false;

  Index n_frames() const { return values.cols(); }
};

struct PatchGrid {
  Matrix<float> patches;  ///< [n_freq * n_time x 256]
  int n_freq = kFreqPatches;
  int n_time = 0;
  int source_frames = 0;

  int size() const { return n_freq * n_time; }
};

struct DatasetStats {
  double mean = 0.0;
  double std = 1.0;
};

inline Index frame_count(std::size_t n_samples) {
  if (n_samples < static_cast<std::size_t>(kWindow)) return 0;
  return 1 + static_cast<Index>((n_samples - kWindow) / kHop);
}

/// Down-mixes, resamples to 16 kHz, then crops or zero-pads to `target_duration_s`.
/// A non-positive target keeps the full length.
inline AudioClip prepare_clip(const wav::Audio& audio, double target_duration_s, Rng& rng) {
  if (audio.frames() == 0) throw IngestionError("audio has no samples");
  std::vector<float> mono(audio.frames());
  const auto ch = static_cast<std::size_t>(audio.channels);
  for (std::size_t i = 0; i < mono.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += audio.interleaved[i * ch + c];
    mono[i] = static_cast<float>(acc / static_cast<double>(ch));
  }
  AudioClip clip{resample(mono, audio.sample_rate, kSampleRate), kSampleRate};
  for (float v : clip.samples)
    if (!std::isfinite(v)) throw IngestionError("non-finite sample after resampling");
  if (target_duration_s > 0.0) {
    const auto target = static_cast<std::size_t>(std::llround(target_duration_s * kSampleRate));
    if (clip.samples.size() > target) {
      std::uniform_int_distribution<std::size_t> pick(0, clip.samples.size() - target);
      const std::size_t start = pick(rng);
      clip.samples = std::vector<float>(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                        clip.samples.begin() + static_cast<std::ptrdiff_t>(start + target));
    } else {
      clip.samples.resize(target, 0.0F);
    }
  }
  return clip;
}

inline AudioClip load_clip(const std::string& path, double target_duration_s, Rng& rng) {
  return prepare_clip(wav::read(path), target_duration_s, rng);
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// [80 x 257] triangular filterbank, each filter scaled to unit area.
inline Matrix<float> mel_filterbank() {
  const int bins = kFftSize / 2 + 1;
  std::vector<double> edges(kMelBins + 2);
  const double lo = hz_to_mel(kMelLow);
  const double hi = hz_to_mel(kMelHigh);
  for (int i = 0; i < kMelBins + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (kMelBins + 1));
  Matrix<float> fb = Matrix<float>::Zero(kMelBins, bins);
  for (int m = 0; m < kMelBins; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    const double area = 2.0 / (right - left);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kFftSize;
      double w = 0.0;
      if (f > left && f <= centre) w = (f - left) / (centre - left);
      else if (f > centre && f < right) w = (right - f) / (right - centre);
      fb(m, k) = static_cast<float>(w * area);
    }
  }
  return fb;
}

/// Stateful log-mel analyser; reuse one instance to amortize the FFT plan and filterbank.
class LogMelAnalyzer {
 public:
  LogMelAnalyzer() : filterbank_(mel_filterbank()), window_(kWindow) {
    for (int i = 0; i < kWindow; ++i)
      window_[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kWindow));
  }

  LogMelSpec operator()(const AudioClip& clip) {
    if (clip.sample_rate != kSampleRate)
      throw DomainError("log_mel: expected 16000 Hz, got " + std::to_string(clip.sample_rate));
    const Index frames = frame_count(clip.samples.size());
    if (frames < 1) throw DomainError("log_mel: clip shorter than one 400-sample window");
    const int bins = kFftSize / 2 + 1;
    Matrix<float> power(bins, frames);
    std::vector<float> buf(kFftSize, 0.0F);
    std::vector<std::complex<float>> spec;
    for (Index t = 0; t < frames; ++t) {
      const std::size_t off = static_cast<std::size_t>(t) * kHop;
      for (int i = 0; i < kWindow; ++i) buf[i] = clip.samples[off + i] * window_[i];
      std::fill(buf.begin() + kWindow, buf.end(), 0.0F);
      fft_.fwd(spec, buf);
      for (int k = 0; k < bins; ++k) power(k, t) = std::norm(spec[static_cast<std::size_t>(k)]);
    }
    LogMelSpec out;
    out.values = (filterbank_ * power).array().unaryExpr([](float v) {
      return static_cast<float>(std::log(static_cast<double>(v) + kLogFloor));
    });
    return out;
  }

  const Matrix<float>& filterbank() const { return filterbank_; }

 private:
  Matrix<float> filterbank_;
  std::vector<float> window_;
  Eigen::FFT<float> fft_;
};

inline LogMelSpec log_mel(const AudioClip& clip) {
  LogMelAnalyzer a;
  return a(clip);
}

inline LogMelSpec standardize(const LogMelSpec& spec, const DatasetStats& stats) {
  if (!(stats.std > 0.0) || !std::isfinite(stats.std))
    throw DomainError("standardize: std must be positive, got " + std::to_string(stats.std));
  LogMelSpec out;
  const auto mean = static_cast<float>(stats.mean);
  const auto inv = static_cast<float>(1.0 / stats.std);
  out.values = ((spec.values.array() - mean) * inv).matrix();
  out.standardized = true;
  return out;
}

inline LogMelSpec destandardize(const LogMelSpec& spec, const DatasetStats& stats) {
  LogMelSpec out;
  out.values = (spec.values.array() * static_cast<float>(stats.std) + static_cast<float>(stats.mean)).matrix();
  out.standardized = false;
  return out;
}

/// Pooled mean/std of log-mel values over up to `max_clips` clips drawn in a seeded order.
/// Unreadable files are skipped; if none can be read an IngestionError is raised.
inline DatasetStats compute_dataset_stats(const Manifest& manifest, std::size_t max_clips, std::uint64_t seed,
                                          double target_duration_s = 0.0) {
  if (manifest.empty()) throw DomainError("compute_dataset_stats: empty manifest");
  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, {0x57A75});
  std::shuffle(order.begin(), order.end(), rng);
  LogMelAnalyzer analyzer;
  // Chan et al. pairwise combination, merged in the fixed shuffled order.
  double n = 0.0, mean = 0.0, m2 = 0.0;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    if (used >= max_clips) break;
    LogMelSpec spec;
    try {
      Rng crop = derive_rng(seed, {0xC409, idx});
      spec = analyzer(load_clip(manifest.entries[idx].path, target_duration_s, crop));
    } catch (const Error&) {
      continue;
    }
    const double nb = static_cast<double>(spec.values.size());
    const double mb = spec.values.cast<double>().mean();
    const double m2b = (spec.values.cast<double>().array() - mb).square().sum();
    const double delta = mb - mean;
    const double tot = n + nb;
    mean += delta * nb / tot;
    m2 += m2b + delta * delta * n * nb / tot;
    n = tot;
    ++used;
  }
  if (used == 0) throw IngestionError("compute_dataset_stats: no readable clips");
  return DatasetStats{mean, std::sqrt(m2 / n)};
}

/// Cuts a standardized spectrogram into non-overlapping 16x16 patches.
inline PatchGrid patchify(const LogMelSpec& spec) {
  if (!spec.standardized) throw DomainError("patchify: spectrogram must be standardized first");
  if (spec.values.rows() != kMelBins) throw ShapeError("patchify: expected 80 mel bins");
  const Index frames = spec.values.cols();
  if (frames < kPatch) throw DomainError("patchify: need at least 16 frames, got " + std::to_string(frames));
  PatchGrid g;
  g.n_time = static_cast<int>(frames / kPatch);
  g.source_frames = static_cast<int>(frames);
  g.patches.resize(g.size(), kPatchDim);
  for (int t = 0; t < g.n_time; ++t)
    for (int f = 0; f < g.n_freq; ++f) {
      const Index row = static_cast<Index>(t) * g.n_freq + f;
      for (int r = 0; r < kPatch; ++r)
        for (int c = 0; c < kPatch; ++c) g.patches(row, r * kPatch + c) = spec.values(f * kPatch + r, t * kPatch + c);
    }
  return g;
}

/// Inverse of patchify: tiles patches back into a [80 x 16 * n_time] spectrogram.
inline Matrix<float> unpatchify(const PatchGrid& g) {
  Matrix<float> out(g.n_freq * kPatch, g.n_time * kPatch);
  for (int t = 0; t < g.n_time; ++t)
    for (int f = 0; f < g.n_freq; ++f) {
      const Index row = static_cast<Index>(t) * g.n_freq + f;
      for (int r = 0; r < kPatch; ++r)
        for (int c = 0; c < kPatch; ++c) out(f * kPatch + r, t * kPatch + c) = g.patches(row, r * kPatch + c);
    }
  return out;
}

/// Frontend bundle: clip -> standardized patches.
struct Frontend {
  DatasetStats stats;
  LogMelAnalyzer analyzer;

  PatchGrid operator()(const AudioClip& clip) { return patchify(standardize(analyzer(clip), stats)); }
};

}  // namespace matpac
