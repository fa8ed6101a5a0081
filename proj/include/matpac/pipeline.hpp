#pragma once

// End-to-end commands: pretrain, probe, ablate and diagnose.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "matpac/config.hpp"
#include "matpac/evaluation.hpp"
#include "matpac/manifest.hpp"
#include "matpac/trainer.hpp"

namespace matpac {

/// "alpha=0.5;K=2048;n_tau=10"
inline std::string config_point_label(const TrainConfig& t) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "alpha=%g;K=%d;n_tau=%d", t.alpha, t.K, t.n_tau_epochs);
  return buf;
}

struct PretrainOutput {
  TrainResult train;
  std::filesystem::path final_checkpoint;
};

inline PretrainOutput pretrain(const RunConfig& config, const std::filesystem::path& out_dir,
                               const TrainLoopOptions& opts = {}) {
  if (config.pretrain_manifest.empty()) throw ConfigError("pretrain_manifest", "required for pretraining");
  const Manifest m = load_manifest(config.pretrain_manifest);
  if (m.empty()) throw DomainError("pretraining manifest is empty: " + config.pretrain_manifest);
  write_resolved_config(config, out_dir);
  const ClipSet data = ClipSet::load(m);
  PretrainOutput out{train_loop(config, data, out_dir, opts, &m), out_dir / "last.mpk"};
  return out;
}

/// Encoder, model sizes and frontend statistics used for probing.
struct ProbeEncoder {
  ParameterStore<float> params;
  ModelConfig config;
  DatasetStats stats;
  std::string origin;
};

/// Loads the configured encoder from a checkpoint, or builds a randomly
/// initialized one (statistics estimated from `stats_manifest`) when no checkpoint is set.
inline ProbeEncoder load_probe_encoder(const RunConfig& config, const Manifest* stats_manifest) {
  ProbeEncoder e;
  if (!config.checkpoint.empty()) {
    if (!std::filesystem::exists(config.checkpoint))
      throw CheckpointError("checkpoint not found: " + config.checkpoint);
    auto ck = load_checkpoint<float>(config.checkpoint);
    e.config = ck.state.model.config;
    e.params = config.eval.encoder == EmbeddingSource::teacher ? ck.state.model.teacher_encoder
                                                               : ck.state.model.student_encoder;
    e.stats = ck.state.stats;
    e.origin = config.checkpoint;
    return e;
  }
  e.config = config.model_config();
  Rng rng = derive_rng(config.seed, {1});
  e.params = init_encoder<float>(e.config, rng);
  if (stats_manifest == nullptr) throw DomainError("random encoder needs a manifest for dataset statistics");
  e.stats = compute_dataset_stats(*stats_manifest, config.frontend.stats_max_clips, config.seed,
                                  config.frontend.crop_seconds);
  e.origin = "random-init";
  return e;
}

inline ProbeOptions probe_options(const RunConfig& c) {
  return ProbeOptions{c.eval.probe_epochs, c.eval.probe_lr, c.eval.probe_batch, c.eval.standardize_embeddings,
                      c.seed};
}

/// Probes every configured task; writes results.csv and summary.txt to `out_dir`.
inline std::vector<ProbeReport> probe(const RunConfig& config, const std::filesystem::path& out_dir,
                                      std::optional<std::string> config_point = std::nullopt) {
  if (config.eval.tasks.empty()) throw ConfigError("eval.tasks", "at least one task is required for probing");
  std::vector<Manifest> manifests;
  for (const auto& t : config.eval.tasks) manifests.push_back(load_manifest(t.manifest));
  const ProbeEncoder enc = load_probe_encoder(config, &manifests.front());
  const std::string fp = encoder_fingerprint(enc.params, enc.stats, config.eval.segment_seconds);
  std::filesystem::create_directories(out_dir);
  write_resolved_config(config, out_dir);

  std::vector<ProbeReport> reports;
  for (std::size_t i = 0; i < config.eval.tasks.size(); ++i) {
    const auto& task = config.eval.tasks[i];
    const auto cache_path = out_dir / ("embeddings_" + task.name + ".mpk");
    EmbeddingCache cache = EmbeddingCache::load_or_empty(cache_path, fp);
    LabeledEmbeddings data = targets_for(manifests[i], task.type);
    data.X = embed_manifest(manifests[i], enc.params, enc.config, enc.stats, config.eval.segment_seconds, &cache);
    cache.save(cache_path);
    reports.push_back(
        run_task(task.name, manifests[i], data, task.protocol, task.type, probe_options(config), config.eval.runs));
  }
  const std::string point = config_point.value_or(config_point_label(config.train));
  write_results_csv(out_dir / "results.csv", {{point, reports}});
  std::ofstream summary(out_dir / "summary.txt");
  summary << "encoder: " << enc.origin << " (" << detail::source_name(config.eval.encoder) << ")\n";
  for (const auto& r : reports) summary << summarize(r) << "\n";
  if (reports.size() > 1) summary << summarize(average_report(reports)) << "\n";
  return reports;
}

struct AblationPoint {
  std::string label;
  RunConfig config;
};

/// Cartesian product of the ablate grid; empty lists fall back to the base value.
inline std::vector<AblationPoint> ablation_grid(const RunConfig& base) {
  const auto& g = base.ablate;
  const std::vector<double> alphas = g.alpha.empty() ? std::vector<double>{base.train.alpha} : g.alpha;
  const std::vector<int> ks = g.K.empty() ? std::vector<int>{base.train.K} : g.K;
  const std::vector<int> taus = g.n_tau.empty() ? std::vector<int>{base.train.n_tau_epochs} : g.n_tau;
  std::vector<AblationPoint> out;
  for (double a : alphas)
    for (int k : ks)
      for (int n : taus) {
        RunConfig c = base;
        c.ablate = {};
        c.train.alpha = a;
        c.train.K = k;
        c.train.n_tau_epochs = n;
        out.push_back({config_point_label(c.train), c});
      }
  return out;
}

inline std::string point_dir_name(const std::string& label) {
  std::string s = label;
  for (char& ch : s)
    if (ch == ';') ch = '_';
  return s;
}

struct AblationResult {
  std::vector<std::pair<std::string, std::vector<ProbeReport>>> rows;
  std::filesystem::path csv;
};

/// Pretrain + probe at every grid point. Point directories are `<out_dir>/<label>`.
inline AblationResult ablate(const RunConfig& base, const std::filesystem::path& out_dir,
                             const std::function<void(const std::string&)>& progress = {}) {
  const auto points = ablation_grid(base);
  AblationResult res;
  std::filesystem::create_directories(out_dir);
  write_resolved_config(base, out_dir);
  for (const auto& p : points) {
    if (progress) progress(p.label);
    const auto dir = out_dir / point_dir_name(p.label);
    RunConfig c = p.config;
    c.output_dir = dir.string();
    const auto pre = pretrain(c, dir);
    c.checkpoint = pre.final_checkpoint.string();
    res.rows.emplace_back(p.label, probe(c, dir, p.label));
  }
  res.csv = out_dir / "ablation_results.csv";
  write_results_csv(res.csv, res.rows);
  return res;
}

struct DiagnoseResult {
  std::size_t steps = 0;
  double max_dominance = 0.0;
  double final_entropy = 0.0;
  std::optional<std::size_t> collapse_step;  ///< step index at which the predicate fired
};

/// Reads a step log and writes the entropy / dominance series with a running
/// count of consecutive above-threshold steps.
inline DiagnoseResult diagnose(const std::filesystem::path& step_log, const std::filesystem::path& out_csv,
                               double threshold = 0.5, int window = 100) {
  const auto logs = read_step_log(step_log);
  if (logs.empty()) throw DomainError("diagnose: step log has no records");
  DiagnoseResult r;
  r.steps = logs.size();
  std::vector<double> dom;
  for (const auto& l : logs) dom.push_back(l.dominance);
  r.collapse_step = detect_collapse(dom, threshold, window);
  if (out_csv.has_parent_path()) std::filesystem::create_directories(out_csv.parent_path());
  std::ofstream out(out_csv);
  if (!out) throw DomainError("cannot write " + out_csv.string());
  out << "step,epoch,teacher_entropy,dominance,above_threshold_run,collapsed\n";
  int run = 0;
  bool collapsed = false;
  char buf[256];
  for (const auto& l : logs) {
    run = l.dominance > threshold ? run + 1 : 0;
    collapsed = collapsed || run >= window;
    r.max_dominance = std::max(r.max_dominance, l.dominance);
    std::snprintf(buf, sizeof buf, "%lld,%d,%.9g,%.9g,%d,%d\n", static_cast<long long>(l.step), l.epoch,
                  l.teacher_entropy, l.dominance, run, collapsed ? 1 : 0);
    out << buf;
  }
  r.final_entropy = logs.back().teacher_entropy;
  return r;
}

}  // namespace matpac
