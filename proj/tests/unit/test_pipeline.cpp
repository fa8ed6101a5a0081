#include <fstream>

#include <gtest/gtest.h>

#include "matpac/pipeline.hpp"
#include "matpac/synth.hpp"
#include "support.hpp"
#include "toy_config.hpp"

using namespace matpac;
using testing_support::TempDir;
using testing_support::tiny_run_config;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class PipelineData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    synth::ToyDatasetOptions o;
    o.n_clips = 20;
    o.duration_s = 1.0;
    o.seed = 5;
    ds_ = new synth::ToyDataset(synth::generate_toy_dataset(dir_->path() / "data", o));
  }
  static void TearDownTestSuite() {
    delete ds_;
    delete dir_;
  }

  static RunConfig config() {
    auto c = tiny_run_config(ds_->pretrain_manifest.string());
    c.train.epochs = 2;
    c.eval.tasks = {{"toy", ds_->tvt_manifest.string(), Protocol::tvt, TaskType::multiclass}};
    return c;
  }

  static TempDir* dir_;
  static synth::ToyDataset* ds_;
};

TempDir* PipelineData::dir_ = nullptr;
synth::ToyDataset* PipelineData::ds_ = nullptr;

}  // namespace

TEST(AblationGrid, CartesianProductInOrder) {
  auto c = tiny_run_config();
  c.ablate.alpha = {0.0, 0.5};
  c.ablate.K = {16, 32, 64};
  const auto g = ablation_grid(c);
  ASSERT_EQ(g.size(), 6U);
  EXPECT_EQ(g[0].label, "alpha=0;K=16;n_tau=2");
  EXPECT_EQ(g[5].label, "alpha=0.5;K=64;n_tau=2");
  EXPECT_EQ(g[4].config.train.K, 32);
  EXPECT_TRUE(g[4].config.ablate.alpha.empty());
  EXPECT_EQ(point_dir_name(g[5].label), "alpha=0.5_K=64_n_tau=2");
}

TEST(AblationGrid, EmptyGridIsTheBasePoint) {
  const auto c = tiny_run_config();
  const auto g = ablation_grid(c);
  ASSERT_EQ(g.size(), 1U);
  EXPECT_EQ(g[0].label, config_point_label(c.train));
}

TEST_F(PipelineData, SingletonAblationMatchesPretrainThenProbe) {
  TempDir out("pipeline_out");
  auto base = config();
  base.ablate.alpha = {0.25};
  const auto res = ablate(base, out / "ablate");
  ASSERT_EQ(res.rows.size(), 1U);
  const auto label = res.rows[0].first;
  const auto point_dir = out / "ablate" / point_dir_name(label);

  RunConfig direct = ablation_grid(base)[0].config;
  direct.output_dir = point_dir.string();
  const auto pre = pretrain(direct, out / "direct");
  direct.checkpoint = pre.final_checkpoint.string();
  probe(direct, out / "direct", label);

  EXPECT_EQ(read_bytes(out / "direct" / "last.mpk"), read_bytes(point_dir / "last.mpk"));
  EXPECT_EQ(read_bytes(out / "direct" / "steps.csv"), read_bytes(point_dir / "steps.csv"));
  EXPECT_EQ(read_bytes(out / "direct" / "results.csv"), read_bytes(point_dir / "results.csv"));

  const auto lines = read_lines(res.csv);
  ASSERT_EQ(lines.size(), 2U);
  EXPECT_EQ(lines[0], kResultsHeader);
  EXPECT_EQ(lines[1].rfind("\"alpha=0.25;K=16;n_tau=2\",toy,accuracy,", 0), 0U);
}

TEST_F(PipelineData, ProbeCachesEmbeddingsAndRandomEncoderNeedsNoCheckpoint) {
  TempDir out("pipeline_probe");
  const auto c = config();
  const auto first = probe(c, out.path());
  EXPECT_TRUE(std::filesystem::exists(out / "embeddings_toy.mpk"));
  EXPECT_TRUE(std::filesystem::exists(out / "summary.txt"));
  const auto second = probe(c, out.path());
  ASSERT_EQ(first.size(), 1U);
  EXPECT_EQ(first[0].scores, second[0].scores);

  auto missing = c;
  missing.checkpoint = (out / "nope.mpk").string();
  EXPECT_THROW(probe(missing, out.path()), CheckpointError);
  auto no_tasks = c;
  no_tasks.eval.tasks.clear();
  EXPECT_THROW(probe(no_tasks, out.path()), ConfigError);
}

TEST_F(PipelineData, PretrainRequiresManifest) {
  TempDir out("pipeline_pre");
  auto c = config();
  c.pretrain_manifest.clear();
  EXPECT_THROW(pretrain(c, out.path()), ConfigError);
}

TEST(Diagnose, SeriesAndCollapseFlag) {
  TempDir dir("diagnose");
  {
    std::ofstream f(dir / "steps.csv");
    f << kStepLogHeader << "\n";
    const double dom[] = {0.2, 0.6, 0.7, 0.3, 0.8, 0.9, 0.95, 0.4};
    for (int i = 0; i < 8; ++i) {
      TrainStepLog l;
      l.step = i;
      l.epoch = i / 4;
      l.dominance = dom[i];
      l.teacher_entropy = 1.0 - dom[i];
      f << format_step_log(l) << "\n";
    }
  }
  const auto r = diagnose(dir / "steps.csv", dir / "diag.csv", 0.5, 3);
  EXPECT_EQ(r.steps, 8U);
  EXPECT_DOUBLE_EQ(r.max_dominance, 0.95);
  EXPECT_NEAR(r.final_entropy, 0.6, 1e-9);
  ASSERT_TRUE(r.collapse_step.has_value());
  EXPECT_EQ(*r.collapse_step, 6U);
  const auto lines = read_lines(dir / "diag.csv");
  ASSERT_EQ(lines.size(), 9U);
  EXPECT_EQ(lines[0], "step,epoch,teacher_entropy,dominance,above_threshold_run,collapsed");
  EXPECT_EQ(lines[7], "6,1,0.05,0.95,3,1");
  EXPECT_EQ(lines[8], "7,1,0.6,0.4,0,1");
  EXPECT_FALSE(diagnose(dir / "steps.csv", dir / "diag2.csv", 0.5, 4).collapse_step.has_value());
}
