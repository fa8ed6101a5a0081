#pragma once

// Run configuration: a JSON tree with sections frontend / model / train / eval /
// ablate. Unknown keys, wrong types and out-of-range values raise ConfigError
// carrying the dotted key path. Defaults follow the published setup wherever it
// states a value; the architecture defaults are the small desk-scale model.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matpac/error.hpp"
#include "matpac/model.hpp"
#include "matpac/objectives.hpp"
#include "matpac/optimizer.hpp"
#include "matpac/schedules.hpp"

namespace matpac {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kRunRootEnv = "MATPAC_RUN_ROOT";

struct FrontendConfig {
  double crop_seconds = 6.0;
  std::size_t stats_max_clips = 1000;
};

/// joint: both losses drive the optimizer. cls_only: the prediction loss is
/// still computed and logged but detached from the optimizer.
enum class Objective { joint, cls_only };

struct TrainConfig {
  double mask_ratio = 0.7;
  double alpha = 0.5;
  int K = 2048;
  double tau_s = 0.1;
  int n_tau_epochs = 10;
  int epochs = 300;
  int batch_size = 2048;
  int warmup_epochs = 20;
  double base_lr = 3e-4;
  double lambda_start = 0.99995;
  double lambda_end = 0.99999;
  LrShape lr_shape = LrShape::cosine;
  double center_momentum = 0.9;
  Reduction reduction = Reduction::mean;
  Objective objective = Objective::joint;
  AdamWConfig optimizer;
  int checkpoint_every = 1;
  double collapse_threshold = 0.5;
  int collapse_window = 100;

  ScheduleConfig schedule() const {
    ScheduleConfig s;
    s.total_epochs = epochs;
    s.warmup_epochs = warmup_epochs;
    s.n_tau_epochs = n_tau_epochs;
    s.base_lr = base_lr;
    s.lambda_start = lambda_start;
    s.lambda_end = lambda_end;
    s.lr_shape = lr_shape;
    return s;
  }
};

enum class Protocol { tvt, kfold };
enum class TaskType { multiclass, multilabel };

struct TaskSpec {
  std::string name;
  std::string manifest;
  Protocol protocol = Protocol::tvt;
  TaskType type = TaskType::multiclass;
};

enum class EmbeddingSource { teacher, student };

struct EvalConfig {
  double segment_seconds = 6.0;
  EmbeddingSource encoder = EmbeddingSource::teacher;
  int probe_epochs = 100;
  double probe_lr = 1e-4;
  int probe_batch = 128;
  int runs = 5;
  bool standardize_embeddings = true;
  std::vector<TaskSpec> tasks;
};

struct AblateConfig {
  std::vector<double> alpha;
  std::vector<int> K;
  std::vector<int> n_tau;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string pretrain_manifest;
  std::string checkpoint;  ///< encoder checkpoint for probe; empty for a random encoder
  FrontendConfig frontend;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  AblateConfig ablate;

  /// Model sizes with K taken from the train section.
  ModelConfig model_config() const {
    ModelConfig m = model;
    m.K = train.K;
    return m;
  }
};

namespace detail {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed is read through the size_t overload");

/// Reads fields of one JSON object, tracking which keys were consumed.
class SectionReader {
 public:
  SectionReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class V>
  void read(const std::string& key, V& dst) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    convert(*it, key_path(key), dst);
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
  }

 private:
  static void convert(const json& j, const std::string& path, double& dst) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    dst = j.get<double>();
  }
  static void convert(const json& j, const std::string& path, int& dst) {
    if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
    dst = j.get<int>();
  }
  static void convert(const json& j, const std::string& path, std::size_t& dst) {
    if (!j.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
    dst = j.get<std::size_t>();
  }
  static void convert(const json& j, const std::string& path, bool& dst) {
    if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
    dst = j.get<bool>();
  }
  static void convert(const json& j, const std::string& path, std::string& dst) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    dst = j.get<std::string>();
  }
  template <class E>
  static void convert(const json& j, const std::string& path, std::vector<E>& dst) {
    if (!j.is_array()) throw ConfigError(path, "expected a list");
    dst.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
      E e{};
      convert(j[i], path + "[" + std::to_string(i) + "]", e);
      dst.push_back(e);
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

template <class E>
E parse_enum(const std::string& s, const std::string& path, std::initializer_list<std::pair<const char*, E>> opts) {
  std::string names;
  for (const auto& [n, v] : opts) {
    if (s == n) return v;
    names += std::string(names.empty() ? "" : "|") + n;
  }
  throw ConfigError(path, "expected one of " + names + ", got '" + s + "'");
}

inline const char* lr_shape_name(LrShape s) { return s == LrShape::cosine ? "cosine" : "constant"; }
inline const char* reduction_name(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }
inline const char* objective_name(Objective o) { return o == Objective::joint ? "joint" : "cls_only"; }
inline const char* protocol_name(Protocol p) { return p == Protocol::tvt ? "tvt" : "kfold"; }
inline const char* task_type_name(TaskType t) { return t == TaskType::multiclass ? "multiclass" : "multilabel"; }
inline const char* source_name(EmbeddingSource s) { return s == EmbeddingSource::teacher ? "teacher" : "student"; }

}  // namespace detail

inline nlohmann::json model_to_json(const ModelConfig& m, bool include_k) {
  nlohmann::json j = {{"d_model", m.d_model},
                      {"depth", m.depth},
                      {"n_heads", m.n_heads},
                      {"mlp_ratio", m.mlp_ratio},
                      {"d_pred", m.d_pred},
                      {"pred_depth", m.pred_depth},
                      {"pred_heads", m.pred_heads},
                      {"head_hidden", m.head_hidden},
                      {"head_bottleneck", m.head_bottleneck},
                      {"max_time_patches", m.max_time_patches},
                      {"predictor_pos_all", m.predictor_pos_all},
                      {"init_std", m.init_std}};
  if (include_k) j["K"] = m.K;
  return j;
}

inline ModelConfig model_from_json(const nlohmann::json& j, const std::string& path, bool allow_k) {
  ModelConfig m;
  detail::SectionReader r(j, path);
  r.read("d_model", m.d_model);
  r.read("depth", m.depth);
  r.read("n_heads", m.n_heads);
  r.read("mlp_ratio", m.mlp_ratio);
  r.read("d_pred", m.d_pred);
  r.read("pred_depth", m.pred_depth);
  r.read("pred_heads", m.pred_heads);
  r.read("head_hidden", m.head_hidden);
  r.read("head_bottleneck", m.head_bottleneck);
  r.read("max_time_patches", m.max_time_patches);
  r.read("predictor_pos_all", m.predictor_pos_all);
  r.read("init_std", m.init_std);
  if (allow_k) r.read("K", m.K);
  r.finish();
  try {
    m.validate();
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
  return m;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json tasks = json::array();
  for (const auto& t : c.eval.tasks)
    tasks.push_back({{"name", t.name},
                     {"manifest", t.manifest},
                     {"protocol", detail::protocol_name(t.protocol)},
                     {"type", detail::task_type_name(t.type)}});
  const auto& tr = c.train;
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"pretrain_manifest", c.pretrain_manifest},
      {"checkpoint", c.checkpoint},
      {"frontend", {{"crop_seconds", c.frontend.crop_seconds}, {"stats_max_clips", c.frontend.stats_max_clips}}},
      {"model", model_to_json(c.model, false)},
      {"train",
       {{"mask_ratio", tr.mask_ratio},
        {"alpha", tr.alpha},
        {"K", tr.K},
        {"tau_s", tr.tau_s},
        {"n_tau_epochs", tr.n_tau_epochs},
        {"epochs", tr.epochs},
        {"batch_size", tr.batch_size},
        {"warmup_epochs", tr.warmup_epochs},
        {"base_lr", tr.base_lr},
        {"lambda_start", tr.lambda_start},
        {"lambda_end", tr.lambda_end},
        {"lr_shape", detail::lr_shape_name(tr.lr_shape)},
        {"center_momentum", tr.center_momentum},
        {"reduction", detail::reduction_name(tr.reduction)},
        {"objective", detail::objective_name(tr.objective)},
        {"weight_decay", tr.optimizer.weight_decay},
        {"beta1", tr.optimizer.beta1},
        {"beta2", tr.optimizer.beta2},
        {"no_decay", tr.optimizer.no_decay_suffixes},
        {"frozen", tr.optimizer.frozen_suffixes},
        {"checkpoint_every", tr.checkpoint_every},
        {"collapse_threshold", tr.collapse_threshold},
        {"collapse_window", tr.collapse_window}}},
      {"eval",
       {{"segment_seconds", c.eval.segment_seconds},
        {"encoder", detail::source_name(c.eval.encoder)},
        {"probe_epochs", c.eval.probe_epochs},
        {"probe_lr", c.eval.probe_lr},
        {"probe_batch", c.eval.probe_batch},
        {"runs", c.eval.runs},
        {"standardize_embeddings", c.eval.standardize_embeddings},
        {"tasks", tasks}}},
      {"ablate", {{"alpha", c.ablate.alpha}, {"K", c.ablate.K}, {"n_tau", c.ablate.n_tau}}}};
}

inline RunConfig from_json(const nlohmann::json& j) {
  using detail::require;
  RunConfig c;
  detail::SectionReader root(j, "");
  int schema = kConfigSchemaVersion;
  root.read("schema_version", schema);
  require(schema == kConfigSchemaVersion, "schema_version",
          "unsupported schema version " + std::to_string(schema));
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  root.read("pretrain_manifest", c.pretrain_manifest);
  root.read("checkpoint", c.checkpoint);

  if (const auto* s = root.sub("frontend")) {
    detail::SectionReader r(*s, "frontend");
    r.read("crop_seconds", c.frontend.crop_seconds);
    r.read("stats_max_clips", c.frontend.stats_max_clips);
    r.finish();
  }
  require(c.frontend.crop_seconds > 0.0, "frontend.crop_seconds", "must be positive");
  require(c.frontend.stats_max_clips >= 1, "frontend.stats_max_clips", "must be >= 1");

  if (const auto* s = root.sub("model")) c.model = model_from_json(*s, "model", false);

  if (const auto* s = root.sub("train")) {
    auto& t = c.train;
    detail::SectionReader r(*s, "train");
    r.read("mask_ratio", t.mask_ratio);
    r.read("alpha", t.alpha);
    r.read("K", t.K);
    r.read("tau_s", t.tau_s);
    r.read("n_tau_epochs", t.n_tau_epochs);
    r.read("epochs", t.epochs);
    r.read("batch_size", t.batch_size);
    r.read("warmup_epochs", t.warmup_epochs);
    r.read("base_lr", t.base_lr);
    r.read("lambda_start", t.lambda_start);
    r.read("lambda_end", t.lambda_end);
    std::string shape = detail::lr_shape_name(t.lr_shape);
    r.read("lr_shape", shape);
    t.lr_shape = detail::parse_enum<LrShape>(shape, "train.lr_shape",
                                             {{"cosine", LrShape::cosine}, {"constant", LrShape::constant}});
    r.read("center_momentum", t.center_momentum);
    std::string red = detail::reduction_name(t.reduction);
    r.read("reduction", red);
    t.reduction =
        detail::parse_enum<Reduction>(red, "train.reduction", {{"mean", Reduction::mean}, {"sum", Reduction::sum}});
    std::string obj = detail::objective_name(t.objective);
    r.read("objective", obj);
    t.objective = detail::parse_enum<Objective>(obj, "train.objective",
                                                {{"joint", Objective::joint}, {"cls_only", Objective::cls_only}});
    r.read("weight_decay", t.optimizer.weight_decay);
    r.read("beta1", t.optimizer.beta1);
    r.read("beta2", t.optimizer.beta2);
    r.read("no_decay", t.optimizer.no_decay_suffixes);
    r.read("frozen", t.optimizer.frozen_suffixes);
    r.read("checkpoint_every", t.checkpoint_every);
    r.read("collapse_threshold", t.collapse_threshold);
    r.read("collapse_window", t.collapse_window);
    r.finish();
  }
  const auto& t = c.train;
  require(t.mask_ratio >= 0.0 && t.mask_ratio < 1.0, "train.mask_ratio", "must lie in [0, 1)");
  require(t.alpha >= 0.0 && t.alpha <= 1.0, "train.alpha", "must lie in [0, 1]");
  require(t.K >= 1, "train.K", "must be >= 1");
  require(t.tau_s > 0.0, "train.tau_s", "must be positive");
  require(t.n_tau_epochs >= 1, "train.n_tau_epochs", "must be >= 1");
  require(t.epochs >= 1, "train.epochs", "must be >= 1");
  require(t.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(t.warmup_epochs >= 0 && t.warmup_epochs < t.epochs, "train.warmup_epochs", "must lie in [0, epochs)");
  require(t.base_lr >= 0.0, "train.base_lr", "must be non-negative");
  require(0.0 <= t.lambda_start && t.lambda_start <= t.lambda_end && t.lambda_end <= 1.0, "train.lambda_start",
          "need 0 <= lambda_start <= lambda_end <= 1");
  require(t.center_momentum >= 0.0 && t.center_momentum <= 1.0, "train.center_momentum", "must lie in [0, 1]");
  require(t.optimizer.weight_decay >= 0.0, "train.weight_decay", "must be non-negative");
  require(t.optimizer.beta1 >= 0.0 && t.optimizer.beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
  require(t.optimizer.beta2 >= 0.0 && t.optimizer.beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
  require(t.checkpoint_every >= 1, "train.checkpoint_every", "must be >= 1");
  require(t.collapse_window >= 1, "train.collapse_window", "must be >= 1");

  if (const auto* s = root.sub("eval")) {
    auto& e = c.eval;
    detail::SectionReader r(*s, "eval");
    r.read("segment_seconds", e.segment_seconds);
    std::string enc = detail::source_name(e.encoder);
    r.read("encoder", enc);
    e.encoder = detail::parse_enum<EmbeddingSource>(
        enc, "eval.encoder", {{"teacher", EmbeddingSource::teacher}, {"student", EmbeddingSource::student}});
    r.read("probe_epochs", e.probe_epochs);
    r.read("probe_lr", e.probe_lr);
    r.read("probe_batch", e.probe_batch);
    r.read("runs", e.runs);
    r.read("standardize_embeddings", e.standardize_embeddings);
    if (const auto* ts = r.sub("tasks")) {
      if (!ts->is_array()) throw ConfigError("eval.tasks", "expected a list");
      for (std::size_t i = 0; i < ts->size(); ++i) {
        const std::string p = "eval.tasks[" + std::to_string(i) + "]";
        detail::SectionReader tr(ts->at(i), p);
        TaskSpec spec;
        tr.read("name", spec.name);
        tr.read("manifest", spec.manifest);
        std::string proto = "tvt", type = "multiclass";
        tr.read("protocol", proto);
        tr.read("type", type);
        tr.finish();
        spec.protocol = detail::parse_enum<Protocol>(proto, p + ".protocol",
                                                     {{"tvt", Protocol::tvt}, {"kfold", Protocol::kfold}});
        spec.type = detail::parse_enum<TaskType>(
            type, p + ".type", {{"multiclass", TaskType::multiclass}, {"multilabel", TaskType::multilabel}});
        require(!spec.name.empty(), p + ".name", "must be non-empty");
        require(!spec.manifest.empty(), p + ".manifest", "must be non-empty");
        e.tasks.push_back(spec);
      }
    }
    r.finish();
  }
  require(c.eval.segment_seconds > 0.0, "eval.segment_seconds", "must be positive");
  require(c.eval.probe_epochs >= 1, "eval.probe_epochs", "must be >= 1");
  require(c.eval.probe_lr > 0.0, "eval.probe_lr", "must be positive");
  require(c.eval.probe_batch >= 1, "eval.probe_batch", "must be >= 1");
  require(c.eval.runs >= 2, "eval.runs", "must be >= 2 for a confidence interval");

  if (const auto* s = root.sub("ablate")) {
    detail::SectionReader r(*s, "ablate");
    r.read("alpha", c.ablate.alpha);
    r.read("K", c.ablate.K);
    r.read("n_tau", c.ablate.n_tau);
    r.finish();
    for (std::size_t i = 0; i < c.ablate.alpha.size(); ++i)
      require(c.ablate.alpha[i] >= 0.0 && c.ablate.alpha[i] <= 1.0, "ablate.alpha[" + std::to_string(i) + "]",
              "must lie in [0, 1]");
    for (std::size_t i = 0; i < c.ablate.K.size(); ++i)
      require(c.ablate.K[i] >= 1, "ablate.K[" + std::to_string(i) + "]", "must be >= 1");
    for (std::size_t i = 0; i < c.ablate.n_tau.size(); ++i)
      require(c.ablate.n_tau[i] >= 1, "ablate.n_tau[" + std::to_string(i) + "]", "must be >= 1");
  }
  root.finish();
  return c;
}

/// Sets `dotted.key.path` in a JSON tree. The value text is parsed as JSON when
/// possible and otherwise taken as a plain string.
inline void apply_override(nlohmann::json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "override '" + assignment + "' must be key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json* node = &tree;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = nlohmann::json::object();
  }
  if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
  (*node)[parts.back()] = value;
}

/// Defaults, then the file (if any), then each `key=value` override in order.
inline RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json tree = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    try {
      tree = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("", "config is not valid JSON: " + std::string(e.what()));
    }
    if (tree.is_null()) tree = nlohmann::json::object();
    // Relative data paths inside a config file are relative to the file itself.
    const auto base = std::filesystem::absolute(path).parent_path();
    auto rebase = [&](nlohmann::json& node, const char* key) {
      if (!node.is_object()) return;
      auto it = node.find(key);
      if (it == node.end() || !it->is_string()) return;
      const std::string v = it->get<std::string>();
      if (!v.empty() && std::filesystem::path(v).is_relative()) *it = (base / v).lexically_normal().string();
    };
    rebase(tree, "pretrain_manifest");
    rebase(tree, "checkpoint");
    if (tree.contains("eval") && tree["eval"].is_object() && tree["eval"].contains("tasks") &&
        tree["eval"]["tasks"].is_array())
      for (auto& t : tree["eval"]["tasks"]) rebase(t, "manifest");
  }
  for (const auto& o : overrides) apply_override(tree, o);
  RunConfig c = from_json(tree);
  return c;
}

/// Output directory, resolved against $MATPAC_RUN_ROOT when relative and the variable is set.
inline std::filesystem::path resolve_output_dir(const RunConfig& c) {
  std::filesystem::path p(c.output_dir);
  if (p.is_relative())
    if (const char* root = std::getenv(kRunRootEnv); root != nullptr && *root != '\0') p = std::filesystem::path(root) / p;
  return p;
}

/// Writes the resolved configuration next to the run's outputs.
inline std::filesystem::path write_resolved_config(const RunConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path);
  out << to_json(c).dump(2) << "\n";
  return path;
}

}  // namespace matpac
