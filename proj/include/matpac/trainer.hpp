#pragma once

// Pretraining: the joint prediction + classification step, the epoch loop,
// collapse diagnostics and checkpoints.
//
// Per step, in this order: masks -> student on visible patches -> teacher on
// masked patches (constant leaves, detached) -> predictor -> losses ->
// AdamW on student encoder, predictor and student head -> encoder EMA (lambda)
// -> head EMA (zeta) -> center EMA.
//
// Randomness is counter-based: every draw comes from a generator derived from
// (seed, purpose, epoch or step), so a run resumed from a checkpoint replays
// exactly the same masks, crops and batch order as an uninterrupted one.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matpac/autograd.hpp"
#include "matpac/config.hpp"
#include "matpac/container.hpp"
#include "matpac/frontend.hpp"
#include "matpac/manifest.hpp"
#include "matpac/masking.hpp"
#include "matpac/model.hpp"
#include "matpac/objectives.hpp"
#include "matpac/optimizer.hpp"
#include "matpac/schedules.hpp"

namespace matpac {

struct TrainStepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double l_pred = 0.0;
  double l_cls = 0.0;
  double total = 0.0;
  double teacher_entropy = 0.0;
  double dominance = 0.0;
  double lr = 0.0;
  double lambda = 1.0;
  double zeta = 1.0;
  double tau_t = kTauTeacherStart;
  /// Phases applied after the gradient, in execution order.
  std::vector<std::string> update_order;

  bool operator==(const TrainStepLog&) const = default;
};

struct CollapseStats {
  double entropy = 0.0;
  double dominance = 0.0;
};

namespace detail {

template <class T>
CollapseStats collapse_stats_unchecked(const Matrix<T>& p) {
  const Matrix<double> pd = p.template cast<double>();
  double h = 0.0;
  for (Index i = 0; i < pd.rows(); ++i)
    for (Index k = 0; k < pd.cols(); ++k)
      if (pd(i, k) > 0.0) h -= pd(i, k) * std::log(pd(i, k));
  return CollapseStats{h / static_cast<double>(pd.rows()), pd.colwise().mean().maxCoeff()};
}

}  // namespace detail

/// Mean row entropy and the largest column mean of a batch of distributions.
template <class T>
CollapseStats collapse_diagnostics(const Matrix<T>& p) {
  if (p.rows() == 0) throw DomainError("collapse_diagnostics: empty batch");
  for (Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < T(0)).any()) throw DomainError("collapse_diagnostics: negative probability");
    if (std::abs(static_cast<double>(p.row(i).sum()) - 1.0) > 1e-5)
      throw DomainError("collapse_diagnostics: row does not sum to 1");
  }
  return detail::collapse_stats_unchecked(p);
}

/// Index of the step at which dominance has exceeded `threshold` for `window`
/// consecutive steps, or nullopt if that never happens.
inline std::optional<std::size_t> detect_collapse(std::span<const double> dominance, double threshold = 0.5,
                                                  int window = 100) {
  int run = 0;
  for (std::size_t i = 0; i < dominance.size(); ++i) {
    run = dominance[i] > threshold ? run + 1 : 0;
    if (run >= window) return i;
  }
  return std::nullopt;
}

/// Loss-side knobs of a step.
struct StepSettings {
  double alpha = 0.5;
  double tau_s = 0.1;
  double tau_t = kTauTeacherStart;
  Reduction reduction = Reduction::mean;
  Objective objective = Objective::joint;
};

/// The differentiable graph of one training step over a batch of clips.
///
/// Teacher parameters are bound as constants by default. With
/// `teacher_as_variables` they become tape variables whose outputs are detached,
/// which lets a test observe that no gradient reaches them.
template <class T>
class StepGraph {
 public:
  StepGraph(const ModelState<T>& model, std::span<const Matrix<T>> patches, std::span<const MaskPartition> masks,
            const StepSettings& s, bool teacher_as_variables = false)
      : student_enc(tape, model.student_encoder, true),
        predictor(tape, model.predictor, true),
        student_head(tape, model.student_head, true),
        teacher_enc(tape, model.teacher_encoder, teacher_as_variables),
        teacher_head(tape, model.teacher_head, teacher_as_variables) {
    if (patches.empty()) throw DomainError("train_step: empty batch");
    if (patches.size() != masks.size()) throw ShapeError("train_step: one mask per clip required");
    const auto& cfg = model.config;
    const T inv_b = T(1) / static_cast<T>(patches.size());

    std::vector<Var> z_hat(patches.size());
    std::vector<Var> z_target(patches.size());
    std::vector<Var> pred_terms;
    std::vector<Matrix<T>> t_logits;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      const auto& m = masks[i];
      if (m.n_total != patches[i].rows()) throw ShapeError("train_step: mask does not match clip length");
      Var x = tape.constant(patches[i]);
      Var xv = ops::gather_rows(tape, x, m.visible);
      Var xm = ops::gather_rows(tape, x, m.masked);
      Var zv = encode(student_enc, cfg, xv, m.visible);
      Var zm = encode(teacher_enc, cfg, xm, m.masked);
      teacher_latent_vars.push_back(zm);
      Var zm_sg = ops::detach(tape, zm);
      z_target[i] = zm_sg;
      z_hat[i] = predict_masked(predictor, cfg, zv, m);
      pred_terms.push_back(ops::pred_loss(tape, z_hat[i], zm_sg, s.reduction));
      Var tl = head_forward(teacher_head, cfg, zm_sg);
      teacher_logit_vars.push_back(tl);
      t_logits.push_back(tape.value(tl));
    }

    Index rows = 0;
    for (const auto& l : t_logits) rows += l.rows();
    teacher_logits.resize(rows, cfg.K);
    rows = 0;
    for (const auto& l : t_logits) {
      teacher_logits.middleRows(rows, l.rows()) = l;
      rows += l.rows();
    }
    effective_center = model.center_initialized ? model.center : Matrix<T>(teacher_logits.colwise().mean());

    std::vector<Var> cls_terms;
    teacher_probs_all.resize(teacher_logits.rows(), cfg.K);
    rows = 0;
    const CenterState<T> center{effective_center, 0.0};
    for (std::size_t i = 0; i < patches.size(); ++i) {
      Matrix<T> p = matpac::teacher_probs<T>(t_logits[i], s.tau_t, center);
      teacher_probs_all.middleRows(rows, p.rows()) = p;
      rows += p.rows();
      Var p_const = tape.constant(std::move(p));
      Var s_logits = head_forward(student_head, cfg, z_hat[i]);
      detail::check_tau(s.tau_s, "student_probs");
      Var p_hat = ops::softmax(tape, s_logits, static_cast<T>(s.tau_s));
      cls_terms.push_back(ops::cross_entropy(tape, p_hat, p_const, s.reduction));
    }

    l_pred = ops::scale(tape, ops::sum<T>(tape, pred_terms), inv_b);
    l_cls = ops::scale(tape, ops::sum<T>(tape, cls_terms), inv_b);
    total = ops::total_loss(tape, l_cls, l_pred, s.alpha);
    objective = s.objective == Objective::joint ? total : l_cls;
  }

  StepGraph(const StepGraph&) = delete;
  StepGraph& operator=(const StepGraph&) = delete;

  T value(Var v) const { return tape.value(v)(0, 0); }

  void backward() { tape.backward(objective); }

  Tape<T> tape;
  Binding<T> student_enc;
  Binding<T> predictor;
  Binding<T> student_head;
  Binding<T> teacher_enc;
  Binding<T> teacher_head;
  Var l_pred, l_cls, total;
  Var objective;  ///< what the optimizer sees
  std::vector<Var> teacher_latent_vars;
  std::vector<Var> teacher_logit_vars;
  Matrix<T> teacher_logits;     ///< all masked tokens of the batch, stacked
  Matrix<T> teacher_probs_all;  ///< matching teacher distributions
  Matrix<T> effective_center;
};

/// Model plus optimizer and counters: everything a checkpoint must hold.
template <class T>
struct TrainState {
  ModelState<T> model;
  AdamW<T> optimizer;
  std::int64_t step = 0;
  int epoch = 0;  ///< completed epochs
  DatasetStats stats;
};

/// One optimization step. Masks are drawn from `mask_rng` (one partition per clip).
template <class T>
TrainStepLog train_step(TrainState<T>& state, std::span<const Matrix<T>> batch, const TrainConfig& config,
                        const ScheduleValues& sv, Rng& mask_rng) {
  if (batch.empty()) throw DomainError("train_step: empty batch");
  std::vector<MaskPartition> masks;
  masks.reserve(batch.size());
  for (const auto& clip : batch) masks.push_back(sample_mask(static_cast<int>(clip.rows()), config.mask_ratio, mask_rng));

  StepSettings settings{config.alpha, config.tau_s, sv.tau_t, config.reduction, config.objective};
  StepGraph<T> g(state.model, batch, masks, settings);

  TrainStepLog log;
  log.step = state.step;
  log.epoch = state.epoch;
  log.l_pred = static_cast<double>(g.value(g.l_pred));
  log.l_cls = static_cast<double>(g.value(g.l_cls));
  log.total = static_cast<double>(g.value(g.total));
  log.lr = sv.lr;
  log.lambda = sv.lambda;
  log.zeta = sv.zeta;
  log.tau_t = sv.tau_t;
  if (!std::isfinite(log.total) || !std::isfinite(log.l_pred) || !std::isfinite(log.l_cls)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step << " (l_pred=" << log.l_pred << ", l_cls=" << log.l_cls
       << ", total=" << log.total << ")";
    throw NumericalError(os.str());
  }
  const auto diag = detail::collapse_stats_unchecked(g.teacher_probs_all);
  log.teacher_entropy = diag.entropy;
  log.dominance = diag.dominance;

  g.backward();
  const auto g_enc = g.student_enc.gradients();
  const auto g_pred = g.predictor.gradients();
  const auto g_head = g.student_head.gradients();
  const ParamGroup<T> groups[] = {{"encoder.", &state.model.student_encoder, &g_enc},
                                  {"predictor.", &state.model.predictor, &g_pred},
                                  {"head.", &state.model.student_head, &g_head}};
  state.optimizer.step(groups, sv.lr);
  log.update_order.emplace_back("optimizer");
  ema_update(state.model.teacher_encoder, state.model.student_encoder, sv.lambda);
  log.update_order.emplace_back("encoder_ema");
  ema_update(state.model.teacher_head, state.model.student_head, sv.zeta);
  log.update_order.emplace_back("head_ema");
  CenterState<T> c{g.effective_center, config.center_momentum};
  state.model.center = update_center(c, g.teacher_logits).C;
  state.model.center_initialized = true;
  log.update_order.emplace_back("center");
  ++state.step;
  return log;
}

// ---------------------------------------------------------------------------
// Step log I/O

inline const char* kStepLogHeader = "step,epoch,l_pred,l_cls,total,teacher_entropy,dominance,lr,lambda,zeta,tau_t";

inline std::string format_step_log(const TrainStepLog& l) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(l.step), l.epoch, l.l_pred, l.l_cls, l.total, l.teacher_entropy, l.dominance,
                l.lr, l.lambda, l.zeta, l.tau_t);
  return buf;
}

inline std::vector<TrainStepLog> read_step_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("step log: cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kStepLogHeader) throw DomainError("step log: unexpected header in " + path.string());
  std::vector<TrainStepLog> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<std::string> cols;
    while (std::getline(ss, f, ',')) cols.push_back(f);
    if (cols.size() != 11) throw DomainError("step log: malformed line '" + line + "'");
    TrainStepLog l;
    l.step = std::stoll(cols[0]);
    l.epoch = std::stoi(cols[1]);
    double* fields[] = {&l.l_pred, &l.l_cls, &l.total, &l.teacher_entropy, &l.dominance,
                        &l.lr,     &l.lambda, &l.zeta, &l.tau_t};
    for (std::size_t i = 0; i < 9; ++i) *fields[i] = std::stod(cols[i + 2]);
    out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointKind = "matpac-checkpoint";

template <class T>
void put_store(ArrayContainer& c, const std::string& prefix, const ParameterStore<T>& s) {
  for (const auto& [name, m] : s) c.put(prefix + name, m);
}

template <class T>
void get_store(const ArrayContainer& c, const std::string& prefix, ParameterStore<T>& s) {
  for (auto& [name, m] : s) m = c.get<T>(prefix + name, m.rows(), m.cols());
}

/// Serializes training state plus the verbatim configuration text.
template <class T>
ArrayContainer checkpoint_container(const TrainState<T>& st, const std::string& config_text, std::uint64_t seed) {
  ArrayContainer c(kCheckpointKind);
  auto& meta = c.meta();
  meta["config"] = config_text;
  meta["model"] = model_to_json(st.model.config, true);
  meta["epoch"] = st.epoch;
  meta["step"] = st.step;
  meta["optimizer_steps"] = st.optimizer.steps();
  meta["center_initialized"] = st.model.center_initialized;
  meta["seed"] = seed;
  meta["rng_policy"] = "mt19937_64 derived per (seed, purpose, epoch|step); no carried generator state";
  meta["stats"] = {{"mean", st.stats.mean}, {"std", st.stats.std}};
  meta["dtype"] = dtype_name<T>();
  put_store(c, "student_encoder.", st.model.student_encoder);
  put_store(c, "teacher_encoder.", st.model.teacher_encoder);
  put_store(c, "predictor.", st.model.predictor);
  put_store(c, "student_head.", st.model.student_head);
  put_store(c, "teacher_head.", st.model.teacher_head);
  c.put("center", st.model.center);
  put_store(c, "opt.m.", st.optimizer.first_moments());
  put_store(c, "opt.v.", st.optimizer.second_moments());
  return c;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const TrainState<T>& st, const std::string& config_text,
                     std::uint64_t seed) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  checkpoint_container(st, config_text, seed).save(path);
}

template <class T>
struct LoadedCheckpoint {
  TrainState<T> state;
  std::string config_text;
  std::uint64_t seed = 0;
};

/// Restores a checkpoint. When `expected` is given, every array must match the
/// shapes that configuration implies (ShapeError otherwise).
template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr,
                                    AdamWConfig opt_config = {}) {
  const ArrayContainer c = ArrayContainer::load(path);
  if (c.kind() != kCheckpointKind) throw CheckpointError("not a checkpoint: kind '" + c.kind() + "'");
  const auto& meta = c.meta();
  try {
    ModelConfig stored = model_from_json(meta.at("model"), "checkpoint.model", true);
    const ModelConfig cfg = expected ? *expected : stored;
    if (expected != nullptr && stored.K != expected->K)
      throw ShapeError("checkpoint has K=" + std::to_string(stored.K) + ", configuration expects K=" +
                       std::to_string(expected->K));
    LoadedCheckpoint<T> out;
    auto& st = out.state;
    st.model = ModelState<T>::init(cfg, 0);
    get_store(c, "student_encoder.", st.model.student_encoder);
    get_store(c, "teacher_encoder.", st.model.teacher_encoder);
    get_store(c, "predictor.", st.model.predictor);
    get_store(c, "student_head.", st.model.student_head);
    get_store(c, "teacher_head.", st.model.teacher_head);
    st.model.center = c.get<T>("center", 1, cfg.K);
    st.model.center_initialized = meta.at("center_initialized").get<bool>();
    ParameterStore<T> m, v;
    for (const auto& r : c.records()) {
      if (r.name.rfind("opt.m.", 0) == 0) m.add(r.name.substr(6), c.get<T>(r.name));
      if (r.name.rfind("opt.v.", 0) == 0) v.add(r.name.substr(6), c.get<T>(r.name));
    }
    st.optimizer = AdamW<T>(std::move(opt_config));
    st.optimizer.restore(meta.at("optimizer_steps").get<std::int64_t>(), std::move(m), std::move(v));
    st.step = meta.at("step").get<std::int64_t>();
    st.epoch = meta.at("epoch").get<int>();
    st.stats = DatasetStats{meta.at("stats").at("mean").get<double>(), meta.at("stats").at("std").get<double>()};
    out.config_text = meta.at("config").get<std::string>();
    out.seed = meta.at("seed").get<std::uint64_t>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint model section invalid: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training loop

/// In-memory pretraining corpus: resampled mono clips at full length.
struct ClipSet {
  std::vector<AudioClip> clips;

  static ClipSet load(const Manifest& m) {
    if (m.empty()) throw DomainError("training manifest is empty");
    ClipSet s;
    Rng unused(0);
    for (const auto& e : m.entries) s.clips.push_back(load_clip(e.path, 0.0, unused));
    return s;
  }
};

struct TrainLoopOptions {
  /// Stop after this many epochs have completed in total (simulates an interruption).
  std::optional<int> stop_after_epoch;
  /// Resume from this checkpoint instead of initializing.
  std::optional<std::filesystem::path> resume_from;
  /// Called after every step.
  std::function<void(const TrainStepLog&)> on_step;
  /// Write checkpoints / step log to the output directory.
  bool write_files = true;
};

struct TrainResult {
  TrainState<float> state;
  std::vector<TrainStepLog> logs;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path log_path;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  char name[64];
  std::snprintf(name, sizeof name, "ckpt_epoch_%04d.mpk", epoch);
  return dir / name;
}

/// Full pretraining run. Outputs go to `out_dir`: steps.csv, ckpt_epoch_NNNN.mpk, last.mpk.
inline TrainResult train_loop(const RunConfig& config, const ClipSet& data, const std::filesystem::path& out_dir,
                              const TrainLoopOptions& opts = {}, const Manifest* stats_manifest = nullptr) {
  if (data.clips.empty()) throw DomainError("train_loop: empty dataset");
  const auto& tc = config.train;
  // The run location is not part of the experiment, so it stays out of the checkpoint.
  RunConfig stored = config;
  stored.output_dir.clear();
  const std::string config_text = to_json(stored).dump();
  const ScheduleConfig sched = tc.schedule();

  TrainResult result;
  auto& st = result.state;
  if (opts.resume_from) {
    const ModelConfig mc = config.model_config();
    auto loaded = load_checkpoint<float>(*opts.resume_from, &mc, tc.optimizer);
    st = std::move(loaded.state);
  } else {
    st.model = ModelState<float>::init(config.model_config(), config.seed);
    st.optimizer = AdamW<float>(tc.optimizer);
    if (stats_manifest != nullptr) {
      st.stats = compute_dataset_stats(*stats_manifest, config.frontend.stats_max_clips, config.seed,
                                       config.frontend.crop_seconds);
    } else {
      // Same estimator over the in-memory clips.
      std::vector<std::size_t> order(data.clips.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = derive_rng(config.seed, {0x57A75});
      std::shuffle(order.begin(), order.end(), rng);
      LogMelAnalyzer an;
      double n = 0.0, mean = 0.0, m2 = 0.0;
      std::size_t used = 0;
      for (std::size_t idx : order) {
        if (used++ >= config.frontend.stats_max_clips) break;
        const auto& src = data.clips[idx];
        wav::Audio a{src.sample_rate, 1, src.samples};
        Rng crop = derive_rng(config.seed, {0xC409, idx});
        const auto spec = an(prepare_clip(a, config.frontend.crop_seconds, crop));
        const double nb = static_cast<double>(spec.values.size());
        const double mb = spec.values.cast<double>().mean();
        const double m2b = (spec.values.cast<double>().array() - mb).square().sum();
        const double delta = mb - mean;
        const double tot = n + nb;
        mean += delta * nb / tot;
        m2 += m2b + delta * delta * n * nb / tot;
        n = tot;
      }
      st.stats = DatasetStats{mean, std::sqrt(m2 / n)};
    }
  }

  std::ofstream log_file;
  if (opts.write_files) {
    std::filesystem::create_directories(out_dir);
    result.log_path = out_dir / "steps.csv";
    // Keep the already-logged prefix when resuming, then continue appending.
    std::vector<std::string> kept;
    if (opts.resume_from && std::filesystem::exists(result.log_path)) {
      for (const auto& l : read_step_log(result.log_path))
        if (l.step < st.step) kept.push_back(format_step_log(l));
    }
    log_file.open(result.log_path, std::ios::trunc);
    log_file << kStepLogHeader << "\n";
    for (const auto& k : kept) log_file << k << "\n";
  }

  Frontend frontend{st.stats, {}};
  const std::size_t n_clips = data.clips.size();
  const auto bs = static_cast<std::size_t>(tc.batch_size);
  const std::size_t steps_per_epoch = (n_clips + bs - 1) / bs;
  const auto crop_len = static_cast<std::size_t>(std::llround(config.frontend.crop_seconds * kSampleRate));

  // Clips that need no random crop give the same patches every epoch.
  std::vector<std::optional<Matrix<float>>> fixed(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i)
    if (data.clips[i].samples.size() <= crop_len) {
      Rng unused(0);
      wav::Audio a{data.clips[i].sample_rate, 1, data.clips[i].samples};
      fixed[i] = frontend(prepare_clip(a, config.frontend.crop_seconds, unused)).patches;
    }

  const int last_epoch = opts.stop_after_epoch ? std::min(*opts.stop_after_epoch, tc.epochs) : tc.epochs;
  for (int epoch = st.epoch; epoch < last_epoch; ++epoch) {
    std::vector<std::size_t> order(n_clips);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = derive_rng(config.seed, {0x0BDE, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<Matrix<float>> batch;
      for (std::size_t j = b * bs; j < std::min(n_clips, (b + 1) * bs); ++j) {
        const std::size_t idx = order[j];
        if (fixed[idx]) {
          batch.push_back(*fixed[idx]);
        } else {
          Rng crop = derive_rng(config.seed, {0xC409, static_cast<std::uint64_t>(epoch), idx});
          wav::Audio a{data.clips[idx].sample_rate, 1, data.clips[idx].samples};
          batch.push_back(frontend(prepare_clip(a, config.frontend.crop_seconds, crop)).patches);
        }
      }
      const double fractional_epoch = epoch + static_cast<double>(b) / static_cast<double>(steps_per_epoch);
      const ScheduleValues sv = schedule_at(sched, fractional_epoch);
      Rng mask_rng = derive_rng(config.seed, {0x3A5C, static_cast<std::uint64_t>(st.step)});
      st.epoch = epoch;
      TrainStepLog log = train_step<float>(st, batch, tc, sv, mask_rng);
      if (log_file.is_open()) log_file << format_step_log(log) << "\n";
      if (opts.on_step) opts.on_step(log);
      result.logs.push_back(std::move(log));
    }
    st.epoch = epoch + 1;
    if (opts.write_files && (st.epoch % tc.checkpoint_every == 0 || st.epoch == tc.epochs)) {
      const auto p = checkpoint_path(out_dir, st.epoch);
      save_checkpoint(p, st, config_text, config.seed);
      std::filesystem::copy_file(p, out_dir / "last.mpk", std::filesystem::copy_options::overwrite_existing);
      result.checkpoints.push_back(p);
    }
    if (log_file.is_open()) log_file.flush();
  }
  return result;
}

}  // namespace matpac
