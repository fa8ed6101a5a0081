#pragma once

// Frozen-encoder linear probing: clip embeddings, probe training, metrics and
// confidence intervals, TVT and k-fold protocols.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "matpac/config.hpp"
#include "matpac/container.hpp"
#include "matpac/error.hpp"
#include "matpac/frontend.hpp"
#include "matpac/manifest.hpp"
#include "matpac/model.hpp"
#include "matpac/tensor.hpp"

namespace matpac {

/// 160 ms, the duration of one patch column.
inline constexpr std::size_t kMinEmbedSamples = static_cast<std::size_t>(kPatch) * kHop;

struct ClipEmbedding {
  RowVector<double> vector;  ///< length 5 * d_model
  int source_segments = 0;
};

/// Splits the clip into non-overlapping segments (last one zero-padded), encodes
/// every segment without masking, concatenates the frequency patches of each time
/// column and averages over time and segments.
inline ClipEmbedding embed_clip(const ParameterStore<float>& encoder, const ModelConfig& cfg, Frontend& frontend,
                                const AudioClip& clip, double segment_seconds = 6.0) {
  if (clip.sample_rate != kSampleRate) throw DomainError("embed_clip: expected a 16 kHz clip");
  if (clip.samples.size() < kMinEmbedSamples)
    throw DomainError("embed_clip: clip shorter than one patch column (" + std::to_string(kMinEmbedSamples) +
                      " samples)");
  const auto seg = static_cast<std::size_t>(std::llround(segment_seconds * kSampleRate));
  const std::size_t n_seg = (clip.samples.size() + seg - 1) / seg;
  const Index width = static_cast<Index>(kFreqPatches) * cfg.d_model;
  ClipEmbedding out{RowVector<double>::Zero(width), static_cast<int>(n_seg)};
  for (std::size_t s = 0; s < n_seg; ++s) {
    AudioClip part;
    const auto begin = clip.samples.begin() + static_cast<std::ptrdiff_t>(s * seg);
    const auto end = clip.samples.begin() + static_cast<std::ptrdiff_t>(std::min(clip.samples.size(), (s + 1) * seg));
    part.samples.assign(begin, end);
    part.samples.resize(seg, 0.0F);
    const PatchGrid grid = frontend(part);
    std::vector<int> positions(static_cast<std::size_t>(grid.size()));
    std::iota(positions.begin(), positions.end(), 0);
    const Matrix<float> z = encode(encoder, cfg, grid.patches, positions);
    RowVector<double> acc = RowVector<double>::Zero(width);
    for (int t = 0; t < grid.n_time; ++t)
      for (int f = 0; f < grid.n_freq; ++f)
        acc.segment(static_cast<Index>(f) * cfg.d_model, cfg.d_model) += z.row(t * grid.n_freq + f).cast<double>();
    out.vector += acc / static_cast<double>(grid.n_time);
  }
  out.vector /= static_cast<double>(n_seg);
  return out;
}

// ---------------------------------------------------------------------------
// Embedding cache

inline constexpr const char* kEmbeddingCacheKind = "matpac-embeddings";

/// Embeddings keyed by clip id, tagged with a fingerprint of the encoder that produced them.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::string fingerprint = {}) : fingerprint_(std::move(fingerprint)) {}

  const std::string& fingerprint() const { return fingerprint_; }
  std::size_t size() const { return rows_.size(); }

  const RowVector<double>* find(const std::string& id) const {
    auto it = rows_.find(id);
    return it == rows_.end() ? nullptr : &it->second;
  }

  void put(const std::string& id, RowVector<double> v) { rows_[id] = std::move(v); }

  void save(const std::filesystem::path& path) const {
    ArrayContainer c(kEmbeddingCacheKind);
    c.meta()["fingerprint"] = fingerprint_;
    for (const auto& [id, v] : rows_) c.put<double>(id, Matrix<double>(v));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    c.save(path);
  }

  /// Loads a cache; returns an empty cache when the file is missing or was made by another encoder.
  static EmbeddingCache load_or_empty(const std::filesystem::path& path, const std::string& fingerprint) {
    EmbeddingCache cache(fingerprint);
    if (!std::filesystem::exists(path)) return cache;
    const ArrayContainer c = ArrayContainer::load(path);
    if (c.kind() != kEmbeddingCacheKind) throw CheckpointError("not an embedding cache: " + path.string());
    if (c.meta().value("fingerprint", std::string()) != fingerprint) return cache;
    for (const auto& r : c.records()) cache.rows_[r.name] = c.get<double>(r.name);
    return cache;
  }

 private:
  std::string fingerprint_;
  std::map<std::string, RowVector<double>> rows_;
};

/// FNV-1a over every parameter byte plus the layout names.
inline std::string encoder_fingerprint(const ParameterStore<float>& enc, const DatasetStats& stats,
                                       double segment_seconds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, m] : enc) {
    mix(name.data(), name.size());
    mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(float));
  }
  mix(&stats.mean, sizeof(double));
  mix(&stats.std, sizeof(double));
  mix(&segment_seconds, sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Metrics

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (predictions.empty()) throw DomainError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

struct MapResult {
  double value = 0.0;
  std::vector<int> excluded_classes;  ///< classes with no positives
  std::vector<double> per_class;      ///< AP per included class, in class order
};

/// Average precision of one ranked column. Ties are broken by row index.
inline double average_precision(const Matrix<double>& scores, const Matrix<double>& labels, Index c) {
  std::vector<Index> order(static_cast<std::size_t>(scores.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a, c) > scores(b, c); });
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels(order[r], c) > 0.5) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

inline MapResult mean_average_precision_report(const Matrix<double>& scores, const Matrix<double>& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw ShapeError("mean_average_precision: shape mismatch");
  if (scores.rows() == 0 || scores.cols() == 0) throw DomainError("mean_average_precision: empty input");
  MapResult r;
  for (Index c = 0; c < scores.cols(); ++c) {
    if ((labels.col(c).array() > 0.5).count() == 0) {
      r.excluded_classes.push_back(static_cast<int>(c));
      continue;
    }
    r.per_class.push_back(average_precision(scores, labels, c));
  }
  if (r.per_class.empty()) throw DomainError("mean_average_precision: no class has a positive example");
  r.value = std::accumulate(r.per_class.begin(), r.per_class.end(), 0.0) / static_cast<double>(r.per_class.size());
  return r;
}

inline double mean_average_precision(const Matrix<double>& scores, const Matrix<double>& labels) {
  return mean_average_precision_report(scores, labels).value;
}

/// Half-width of the two-sided 95% Student-t interval of the mean.
inline double ci95(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw DomainError("ci95: need at least two scores");
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeOptions {
  int epochs = 100;
  double lr = 1e-4;
  int batch = 128;
  bool standardize = true;
  std::uint64_t seed = 0;
};

/// One fully connected layer on (optionally standardized) embeddings.
struct LinearProbe {
  TaskType type = TaskType::multiclass;
  RowVector<double> mean;
  RowVector<double> scale;  ///< 1 / std
  Matrix<double> W;         ///< [D x C]
  RowVector<double> b;      ///< [1 x C]
  int best_epoch = -1;
  double best_val_loss = 0.0;

  Matrix<double> logits(const Matrix<double>& X) const {
    Matrix<double> Xs = (X.rowwise() - mean).array().rowwise() * scale.array();
    return (Xs * W).rowwise() + b;
  }

  /// Class probabilities (softmax) or per-class sigmoid scores.
  Matrix<double> scores(const Matrix<double>& X) const {
    Matrix<double> z = logits(X);
    if (type == TaskType::multilabel) return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    for (Index i = 0; i < z.rows(); ++i) {
      z.row(i).array() -= z.row(i).maxCoeff();
      z.row(i) = z.row(i).array().exp().matrix();
      z.row(i) /= z.row(i).sum();
    }
    return z;
  }

  std::vector<int> predict(const Matrix<double>& X) const {
    const Matrix<double> z = logits(X);
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Index i = 0; i < z.rows(); ++i) {
      Index k = 0;
      z.row(i).maxCoeff(&k);
      out[static_cast<std::size_t>(i)] = static_cast<int>(k);
    }
    return out;
  }
};

namespace detail {

/// Mean loss and its gradient w.r.t. the logits, for targets Y ([M x C] one-hot or multi-hot).
inline double probe_loss(TaskType type, const Matrix<double>& z, const Matrix<double>& Y, Matrix<double>* dz) {
  const auto m = static_cast<double>(z.rows());
  double loss = 0.0;
  if (dz != nullptr) dz->resize(z.rows(), z.cols());
  if (type == TaskType::multiclass) {
    for (Index i = 0; i < z.rows(); ++i) {
      const double mx = z.row(i).maxCoeff();
      const RowVector<double> e = (z.row(i).array() - mx).exp().matrix();
      const double sum = e.sum();
      loss += -(Y.row(i).array() * ((z.row(i).array() - mx) - std::log(sum))).sum();
      if (dz != nullptr) dz->row(i) = (e / sum - Y.row(i)) / m;
    }
  } else {
    for (Index i = 0; i < z.rows(); ++i)
      for (Index c = 0; c < z.cols(); ++c) {
        const double v = z(i, c);
        const double y = Y(i, c);
        loss += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v)));
        if (dz != nullptr) (*dz)(i, c) = (1.0 / (1.0 + std::exp(-v)) - y) / m;
      }
  }
  return loss / m;
}

}  // namespace detail

/// Trains a probe with Adam. When validation data is given, the weights with the
/// lowest validation loss over all epochs are kept; otherwise the final ones.
inline LinearProbe fit_probe(const Matrix<double>& X, const Matrix<double>& Y, TaskType type,
                             const ProbeOptions& opt, const Matrix<double>* X_val = nullptr,
                             const Matrix<double>* Y_val = nullptr) {
  if (X.rows() < 2) throw DomainError("fit_probe: need at least two training examples");
  if (X.rows() != Y.rows()) throw ShapeError("fit_probe: embeddings and labels differ in length");
  if ((X_val == nullptr) != (Y_val == nullptr)) throw DomainError("fit_probe: validation data incomplete");
  if (type == TaskType::multiclass) {
    for (Index i = 0; i < Y.rows(); ++i)
      if (std::abs(Y.row(i).sum() - 1.0) > 1e-12 || (Y.row(i).array() != 0.0 && Y.row(i).array() != 1.0).any())
        throw DomainError("fit_probe: multi-class rows must be one-hot");
    if ((Y.colwise().sum().array() > 0.0).count() < 2)
      throw DomainError("fit_probe: training set contains a single class");
  }
  const Index D = X.cols(), C = Y.cols();
  LinearProbe p;
  p.type = type;
  p.mean = RowVector<double>::Zero(D);
  p.scale = RowVector<double>::Ones(D);
  if (opt.standardize) {
    p.mean = X.colwise().mean();
    const RowVector<double> var = (X.rowwise() - p.mean).array().square().colwise().mean().matrix();
    for (Index d = 0; d < D; ++d) p.scale(d) = var(d) > 1e-24 ? 1.0 / std::sqrt(var(d)) : 1.0;
  }
  Rng rng = derive_rng(opt.seed, {0x9B0BE});
  const double bound = 1.0 / std::sqrt(static_cast<double>(D));
  std::uniform_real_distribution<double> u(-bound, bound);
  p.W = Matrix<double>::NullaryExpr(D, C, [&]() { return u(rng); });
  p.b = RowVector<double>::Zero(C);

  Matrix<double> mW = Matrix<double>::Zero(D, C), vW = mW;
  RowVector<double> mb = RowVector<double>::Zero(C), vb = mb;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  const Matrix<double> Xs = (X.rowwise() - p.mean).array().rowwise() * p.scale.array();
  std::vector<Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Index{0});

  LinearProbe best = p;
  best.best_val_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      const auto n = static_cast<Index>(stop - start);
      Matrix<double> xb(n, D), yb(n, C);
      for (Index i = 0; i < n; ++i) {
        xb.row(i) = Xs.row(order[start + static_cast<std::size_t>(i)]);
        yb.row(i) = Y.row(order[start + static_cast<std::size_t>(i)]);
      }
      Matrix<double> dz;
      detail::probe_loss(type, (xb * p.W).rowwise() + p.b, yb, &dz);
      const Matrix<double> gW = xb.transpose() * dz;
      const RowVector<double> gb = dz.colwise().sum();
      ++t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
      mW = b1 * mW + (1.0 - b1) * gW;
      vW = (b2 * vW.array() + (1.0 - b2) * gW.array().square()).matrix();
      mb = b1 * mb + (1.0 - b1) * gb;
      vb = (b2 * vb.array() + (1.0 - b2) * gb.array().square()).matrix();
      p.W.array() -= opt.lr * (mW.array() / c1) / ((vW.array() / c2).sqrt() + eps);
      p.b.array() -= opt.lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
    if (X_val != nullptr) {
      const double vl = detail::probe_loss(type, p.logits(*X_val), *Y_val, nullptr);
      if (vl < best.best_val_loss) {
        best = p;
        best.best_epoch = epoch;
        best.best_val_loss = vl;
      }
    }
  }
  if (X_val == nullptr) {
    p.best_epoch = opt.epochs - 1;
    p.best_val_loss = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Task protocols

struct ProbeReport {
  std::string task;
  std::string metric;          ///< "accuracy" | "mAP"
  std::vector<double> scores;  ///< one per run, in percent
  double mean = 0.0;
  double ci95 = 0.0;
};

inline ProbeReport make_report(std::string task, std::string metric, std::vector<double> scores) {
  ProbeReport r{std::move(task), std::move(metric), std::move(scores), 0.0, 0.0};
  r.mean = std::accumulate(r.scores.begin(), r.scores.end(), 0.0) / static_cast<double>(r.scores.size());
  r.ci95 = ci95(r.scores);
  return r;
}

/// Embeddings and targets for every manifest entry.
struct LabeledEmbeddings {
  Matrix<double> X;
  Matrix<double> Y;
  std::vector<std::string> classes;
};

inline LabeledEmbeddings targets_for(const Manifest& m, TaskType type) {
  LabeledEmbeddings out;
  out.classes = m.label_set();
  if (out.classes.empty()) throw DomainError("probe manifest has no labels");
  out.Y = Matrix<double>::Zero(static_cast<Index>(m.size()), static_cast<Index>(out.classes.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& labels = m.entries[i].labels;
    if (type == TaskType::multiclass && labels.size() != 1)
      throw DomainError("multi-class manifest row " + std::to_string(i + 1) + " must have exactly one label");
    for (const auto& l : labels) {
      const auto k = std::lower_bound(out.classes.begin(), out.classes.end(), l) - out.classes.begin();
      out.Y(static_cast<Index>(i), static_cast<Index>(k)) = 1.0;
    }
  }
  return out;
}

/// Embeds every clip of a manifest, reusing and extending `cache` when given.
inline Matrix<double> embed_manifest(const Manifest& m, const ParameterStore<float>& encoder, const ModelConfig& cfg,
                                     const DatasetStats& stats, double segment_seconds,
                                     EmbeddingCache* cache = nullptr) {
  Frontend fe{stats, {}};
  const Index width = static_cast<Index>(kFreqPatches) * cfg.d_model;
  Matrix<double> X(static_cast<Index>(m.size()), width);
  Rng unused(0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& path = m.entries[i].path;
    if (cache != nullptr)
      if (const auto* v = cache->find(path); v != nullptr && v->size() == width) {
        X.row(static_cast<Index>(i)) = *v;
        continue;
      }
    const ClipEmbedding e = embed_clip(encoder, cfg, fe, load_clip(path, 0.0, unused), segment_seconds);
    X.row(static_cast<Index>(i)) = e.vector;
    if (cache != nullptr) cache->put(path, e.vector);
  }
  return X;
}

namespace detail {

inline Matrix<double> take_rows(const Matrix<double>& M, const std::vector<Index>& idx) {
  Matrix<double> out(static_cast<Index>(idx.size()), M.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = M.row(idx[i]);
  return out;
}

inline double score_percent(const LinearProbe& p, TaskType type, const Matrix<double>& X, const Matrix<double>& Y) {
  if (type == TaskType::multiclass) {
    const auto pred = p.predict(X);
    std::vector<int> truth(static_cast<std::size_t>(Y.rows()));
    for (Index i = 0; i < Y.rows(); ++i) {
      Index k = 0;
      Y.row(i).maxCoeff(&k);
      truth[static_cast<std::size_t>(i)] = static_cast<int>(k);
    }
    return 100.0 * accuracy(pred, truth);
  }
  return 100.0 * mean_average_precision(p.scores(X), Y);
}

}  // namespace detail

/// Runs the protocol of one task on precomputed embeddings. Scores are in percent.
inline ProbeReport run_task(const std::string& name, const Manifest& m, const LabeledEmbeddings& data,
                            Protocol protocol, TaskType type, const ProbeOptions& base, int runs = 5) {
  const std::string metric = type == TaskType::multiclass ? "accuracy" : "mAP";
  std::vector<double> scores;
  if (protocol == Protocol::tvt) {
    if (!m.has_split) throw DomainError("task '" + name + "': TVT protocol needs a split column");
    std::vector<Index> tr, va, te;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto& s = m.entries[i].split;
      (s == "train" ? tr : s == "valid" ? va : te).push_back(static_cast<Index>(i));
    }
    if (tr.empty() || va.empty() || te.empty())
      throw DomainError("task '" + name + "': train, valid and test splits must all be non-empty");
    const auto Xtr = detail::take_rows(data.X, tr), Ytr = detail::take_rows(data.Y, tr);
    const auto Xva = detail::take_rows(data.X, va), Yva = detail::take_rows(data.Y, va);
    const auto Xte = detail::take_rows(data.X, te), Yte = detail::take_rows(data.Y, te);
    for (int r = 0; r < runs; ++r) {
      ProbeOptions o = base;
      o.seed = derive_rng(base.seed, {0x7A5C, static_cast<std::uint64_t>(r)})();
      const LinearProbe p = fit_probe(Xtr, Ytr, type, o, &Xva, &Yva);
      scores.push_back(detail::score_percent(p, type, Xte, Yte));
    }
  } else {
    if (!m.has_fold) throw DomainError("task '" + name + "': k-fold protocol needs a fold column");
    const auto folds = m.folds();
    if (folds.size() < 3) throw DomainError("task '" + name + "': k-fold protocol needs at least 3 folds");
    for (int r = 0; r < runs; ++r) {
      double sum = 0.0;
      for (std::size_t fi = 0; fi < folds.size(); ++fi) {
        const int test_fold = folds[fi];
        const int val_fold = folds[(fi + 1) % folds.size()];
        std::vector<Index> tr, va, te;
        for (std::size_t i = 0; i < m.size(); ++i) {
          const int f = *m.entries[i].fold;
          (f == test_fold ? te : f == val_fold ? va : tr).push_back(static_cast<Index>(i));
        }
        const auto Xtr = detail::take_rows(data.X, tr), Ytr = detail::take_rows(data.Y, tr);
        const auto Xva = detail::take_rows(data.X, va), Yva = detail::take_rows(data.Y, va);
        ProbeOptions o = base;
        o.seed = derive_rng(base.seed, {0x7A5C, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(fi)})();
        const LinearProbe p = fit_probe(Xtr, Ytr, type, o, &Xva, &Yva);
        sum += detail::score_percent(p, type, detail::take_rows(data.X, te), detail::take_rows(data.Y, te));
      }
      scores.push_back(sum / static_cast<double>(folds.size()));
    }
  }
  return make_report(name, metric, std::move(scores));
}

// ---------------------------------------------------------------------------
// Results table

inline constexpr const char* kResultsHeader = "config_point,task,metric,mean,ci95";

/// Adds an "All" report whose per-run score is the average over tasks of that run.
inline ProbeReport average_report(const std::vector<ProbeReport>& reports) {
  if (reports.empty()) throw DomainError("average_report: no reports");
  const std::size_t runs = reports.front().scores.size();
  std::vector<double> avg(runs, 0.0);
  for (const auto& r : reports) {
    if (r.scores.size() != runs) throw ShapeError("average_report: run counts differ");
    for (std::size_t i = 0; i < runs; ++i) avg[i] += r.scores[i] / static_cast<double>(reports.size());
  }
  return make_report("All", "average", std::move(avg));
}

inline std::string format_result_row(const std::string& config_point, const ProbeReport& r) {
  char buf[64];
  std::string line = "\"" + config_point + "\"," + r.task + "," + r.metric + ",";
  std::snprintf(buf, sizeof buf, "%.4f,%.4f", r.mean, r.ci95);
  return line + buf;
}

inline void write_results_csv(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, std::vector<ProbeReport>>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  out << kResultsHeader << "\n";
  for (const auto& [point, reports] : rows) {
    for (const auto& r : reports) out << format_result_row(point, r) << "\n";
    if (reports.size() > 1) out << format_result_row(point, average_report(reports)) << "\n";
  }
}

inline std::string summarize(const ProbeReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-8s %7.2f +/- %.2f  (runs:", r.task.c_str(), r.metric.c_str(), r.mean,
                r.ci95);
  std::string s = buf;
  for (double v : r.scores) {
    std::snprintf(buf, sizeof buf, " %.2f", v);
    s += buf;
  }
  return s + ")";
}

}  // namespace matpac
