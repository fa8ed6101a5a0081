#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "matpac/config.hpp"
#include "support.hpp"

using namespace matpac;
using testing_support::TempDir;

namespace {

std::string key_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.key_path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, DefaultsMatchPublishedSettings) {
  const auto c = parse_config("");
  EXPECT_EQ(c.train.mask_ratio, 0.7);
  EXPECT_EQ(c.train.alpha, 0.5);
  EXPECT_EQ(c.train.K, 2048);
  EXPECT_EQ(c.train.tau_s, 0.1);
  EXPECT_EQ(c.train.n_tau_epochs, 10);
  EXPECT_EQ(c.train.epochs, 300);
  EXPECT_EQ(c.train.batch_size, 2048);
  EXPECT_EQ(c.train.warmup_epochs, 20);
  EXPECT_EQ(c.train.center_momentum, 0.9);
  EXPECT_EQ(c.train.collapse_threshold, 0.5);
  EXPECT_EQ(c.train.collapse_window, 100);
  EXPECT_EQ(c.frontend.crop_seconds, 6.0);
  EXPECT_EQ(c.eval.segment_seconds, 6.0);
  EXPECT_EQ(c.eval.probe_epochs, 100);
  EXPECT_EQ(c.eval.probe_lr, 1e-4);
  EXPECT_EQ(c.eval.probe_batch, 128);
  EXPECT_EQ(c.eval.runs, 5);
  EXPECT_EQ(c.train.reduction, Reduction::mean);
  EXPECT_EQ(c.train.objective, Objective::joint);
  EXPECT_EQ(c.model_config().K, 2048);
}

TEST(Config, FileThenOverrides) {
  TempDir dir("config");
  {
    std::ofstream f(dir / "run.json");
    f << R"({
      // comments are allowed
      "seed": 11,
      "pretrain_manifest": "data/pretrain.csv",
      "train": {"alpha": 0.25, "K": 256, "epochs": 50, "warmup_epochs": 5},
      "eval": {"tasks": [{"name": "toy", "manifest": "data/tvt.csv", "protocol": "tvt"}]},
      "ablate": {"alpha": [0.25, 1.0]}
    })";
  }
  const auto c = parse_config((dir / "run.json").string(), {"train.alpha=0.75", "model.depth=2", "eval.runs=3"});
  EXPECT_EQ(c.seed, 11U);
  EXPECT_EQ(c.train.alpha, 0.75);
  EXPECT_EQ(c.train.K, 256);
  EXPECT_EQ(c.model.depth, 2);
  EXPECT_EQ(c.eval.runs, 3);
  EXPECT_EQ(c.ablate.alpha, (std::vector<double>{0.25, 1.0}));
  // Relative data paths resolve against the config file's directory.
  EXPECT_EQ(std::filesystem::path(c.pretrain_manifest), (dir.path() / "data/pretrain.csv").lexically_normal());
  ASSERT_EQ(c.eval.tasks.size(), 1U);
  EXPECT_EQ(std::filesystem::path(c.eval.tasks[0].manifest), (dir.path() / "data/tvt.csv").lexically_normal());
}

TEST(Config, StringOverrideAndEnumParsing) {
  const auto c = parse_config("", {"output_dir=runs/x", "train.objective=cls_only", "train.lr_shape=constant",
                                   "train.reduction=sum", "eval.encoder=student"});
  EXPECT_EQ(c.output_dir, "runs/x");
  EXPECT_EQ(c.train.objective, Objective::cls_only);
  EXPECT_EQ(c.train.lr_shape, LrShape::constant);
  EXPECT_EQ(c.train.reduction, Reduction::sum);
  EXPECT_EQ(c.eval.encoder, EmbeddingSource::student);
}

TEST(Config, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(key_of([] { parse_config("", {"train.alpha=1.5"}); }), "train.alpha");
  EXPECT_EQ(key_of([] { parse_config("", {"train.mask_ratio=1.0"}); }), "train.mask_ratio");
  EXPECT_EQ(key_of([] { parse_config("", {"train.tau_s=0"}); }), "train.tau_s");
  EXPECT_EQ(key_of([] { parse_config("", {"train.warmup_epochs=400"}); }), "train.warmup_epochs");
  EXPECT_EQ(key_of([] { parse_config("", {"eval.runs=1"}); }), "eval.runs");
  EXPECT_EQ(key_of([] { parse_config("", {"ablate.K=[1024, 0]"}); }), "ablate.K[1]");
  EXPECT_EQ(key_of([] { parse_config("", {"train.reduction=median"}); }), "train.reduction");
  EXPECT_NE(key_of([] { parse_config("", {"train.bogus=1"}); }).find("bogus"), std::string::npos);
  EXPECT_NE(key_of([] { parse_config("", {"train.alpha=\"high\""}); }).find("alpha"), std::string::npos);
  EXPECT_THROW(parse_config("/nonexistent/config.json"), ConfigError);
  EXPECT_THROW(parse_config("", {"no_equals_sign"}), ConfigError);
  EXPECT_THROW(parse_config("", {"schema_version=2"}), ConfigError);
  EXPECT_THROW(parse_config("", {"model.n_heads=5"}), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = parse_config("", {"train.alpha=0.25", "train.K=512", "ablate.n_tau=[5,10]", "seed=99",
                             "eval.tasks=[{\"name\":\"a\",\"manifest\":\"/m.csv\",\"type\":\"multilabel\"}]"});
  const auto j = to_json(c);
  const auto back = from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.train.K, 512);
  EXPECT_EQ(back.eval.tasks.at(0).type, TaskType::multilabel);
}

TEST(Config, RunRootEnvironmentVariable) {
  auto c = parse_config("", {"output_dir=runs/abc"});
  ::unsetenv(kRunRootEnv);
  EXPECT_EQ(resolve_output_dir(c), std::filesystem::path("runs/abc"));
  ::setenv(kRunRootEnv, "/tmp/root", 1);
  EXPECT_EQ(resolve_output_dir(c), std::filesystem::path("/tmp/root/runs/abc"));
  c.output_dir = "/abs/dir";
  EXPECT_EQ(resolve_output_dir(c), std::filesystem::path("/abs/dir"));
  ::unsetenv(kRunRootEnv);
}

TEST(Config, WriteResolvedConfigReparses) {
  TempDir dir("config_out");
  const auto c = parse_config("", {"train.alpha=0.25"});
  const auto p = write_resolved_config(c, dir.path());
  const auto back = parse_config(p.string());
  EXPECT_EQ(to_json(back), to_json(c));
}
