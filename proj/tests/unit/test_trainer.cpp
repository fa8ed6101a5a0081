#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "matpac/synth.hpp"
#include "matpac/trainer.hpp"
#include "support.hpp"
#include "toy_config.hpp"

using namespace matpac;
using testing_support::random_matrix;
using testing_support::TempDir;
using testing_support::tiny_run_config;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One synthetic corpus shared by every test in this file.
class TrainerData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("trainer");
    synth::ToyDatasetOptions o;
    o.n_clips = 16;
    o.duration_s = 1.5;
    o.seed = 4;
    const auto ds = synth::generate_toy_dataset(dir_->path(), o);
    manifest_path_ = ds.pretrain_manifest.string();
    clips_ = new ClipSet(ClipSet::load(load_manifest(manifest_path_)));
  }
  static void TearDownTestSuite() {
    delete clips_;
    delete dir_;
  }

  static TempDir* dir_;
  static ClipSet* clips_;
  static std::string manifest_path_;
};

TempDir* TrainerData::dir_ = nullptr;
ClipSet* TrainerData::clips_ = nullptr;
std::string TrainerData::manifest_path_;

struct StepFixture {
  TrainState<double> st;
  std::vector<Matrix<double>> batch;
  TrainConfig tc;

  explicit StepFixture(double alpha = 0.5, double wd = 0.05) {
    auto rc = tiny_run_config();
    tc = rc.train;
    tc.alpha = alpha;
    tc.optimizer.weight_decay = wd;
    st.model = ModelState<double>::init(rc.model_config(), 9);
    st.optimizer = AdamW<double>(tc.optimizer);
    for (int i = 0; i < 3; ++i) batch.push_back(random_matrix(20, kPatchDim, 40 + i));
  }

  TrainStepLog step(const ScheduleValues& sv, std::uint64_t seed = 1) {
    Rng rng(seed);
    return train_step<double>(st, batch, tc, sv, rng);
  }
};

bool stores_equal(const ParameterStore<double>& a, const ParameterStore<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].second != b[i].second) return false;
  return true;
}

}  // namespace

TEST(CollapseDiagnostics, Examples) {
  const Matrix<double> u = Matrix<double>::Constant(3, 4, 0.25);
  const auto a = collapse_diagnostics(u);
  EXPECT_NEAR(a.entropy, std::log(4.0), 1e-12);
  EXPECT_NEAR(a.dominance, 0.25, 1e-15);

  Matrix<double> same = Matrix<double>::Zero(5, 4);
  same.col(2).setOnes();
  const auto b = collapse_diagnostics(same);
  EXPECT_EQ(b.entropy, 0.0);
  EXPECT_EQ(b.dominance, 1.0);

  Matrix<double> half = Matrix<double>::Zero(4, 4);
  half(0, 1) = half(1, 1) = half(2, 3) = half(3, 3) = 1.0;
  EXPECT_NEAR(collapse_diagnostics(half).dominance, 0.5, 1e-15);

  Matrix<double> bad = u;
  bad(0, 0) = 0.5;
  EXPECT_THROW(collapse_diagnostics(bad), DomainError);
}

TEST(DetectCollapse, SustainedRunOnly) {
  std::vector<double> d(300, 0.3);
  EXPECT_FALSE(detect_collapse(d, 0.5, 100));
  for (int i = 50; i < 149; ++i) d[static_cast<std::size_t>(i)] = 0.9;
  EXPECT_FALSE(detect_collapse(d, 0.5, 100));
  d[149] = 0.9;
  ASSERT_TRUE(detect_collapse(d, 0.5, 100));
  EXPECT_EQ(*detect_collapse(d, 0.5, 100), 149U);
  std::vector<double> at(150, 0.5);
  EXPECT_FALSE(detect_collapse(at, 0.5, 100));
}

TEST(TrainStep, UnitDecaysLeaveTeacherUntouched) {
  StepFixture f;
  const auto enc = f.st.model.teacher_encoder;
  const auto head = f.st.model.teacher_head;
  const auto student_before = f.st.model.student_encoder;
  f.step(ScheduleValues{1e-3, 1.0, 1.0, 0.04});
  EXPECT_TRUE(stores_equal(f.st.model.teacher_encoder, enc));
  EXPECT_TRUE(stores_equal(f.st.model.teacher_head, head));
  EXPECT_FALSE(stores_equal(f.st.model.student_encoder, student_before));
}

TEST(TrainStep, AlphaOneWithoutDecayKeepsStudentHeadAtInit) {
  StepFixture f(1.0, 0.0);
  const auto head = f.st.model.student_head;
  const auto pred = f.st.model.predictor;
  for (int i = 0; i < 3; ++i) f.step(ScheduleValues{1e-3, 0.99, 0.998, 0.04}, static_cast<std::uint64_t>(i));
  EXPECT_TRUE(stores_equal(f.st.model.student_head, head));
  EXPECT_FALSE(stores_equal(f.st.model.predictor, pred));
}

TEST(TrainStep, UpdateOrderAndCounters) {
  StepFixture f;
  const auto log = f.step(ScheduleValues{1e-3, 0.99, 0.998, 0.05});
  EXPECT_EQ(log.update_order, (std::vector<std::string>{"optimizer", "encoder_ema", "head_ema", "center"}));
  EXPECT_EQ(log.step, 0);
  EXPECT_EQ(f.st.step, 1);
  EXPECT_EQ(f.st.optimizer.steps(), 1);
  EXPECT_TRUE(f.st.model.center_initialized);
  EXPECT_TRUE(f.st.model.center.allFinite());
  EXPECT_EQ(log.tau_t, 0.05);
  EXPECT_EQ(log.total, total_loss(log.l_cls, log.l_pred, 0.5));
}

TEST(TrainStep, FirstCenterIsTheBatchMean) {
  StepFixture f;
  std::vector<MaskPartition> masks;
  Rng rng(1);
  for (const auto& b : f.batch) masks.push_back(sample_mask(static_cast<int>(b.rows()), f.tc.mask_ratio, rng));
  StepGraph<double> g(f.st.model, f.batch, masks, StepSettings{});
  const Matrix<double> mean = g.teacher_logits.colwise().mean();
  // The teacher head is evaluated before any update, so the center equals this mean.
  f.step(ScheduleValues{1e-3, 0.99, 0.998, 0.04});
  EXPECT_TRUE(f.st.model.center.isApprox(mean, 1e-12));
}

TEST(TrainStep, TeacherPathGradientIsExactlyZero) {
  StepFixture f;
  std::vector<MaskPartition> masks;
  Rng rng(2);
  for (const auto& b : f.batch) masks.push_back(sample_mask(static_cast<int>(b.rows()), 0.7, rng));
  StepGraph<double> g(f.st.model, f.batch, masks, StepSettings{}, true);
  g.backward();
  for (const auto& [name, m] : g.teacher_enc.gradients()) EXPECT_EQ(m.squaredNorm(), 0.0) << name;
  for (const auto& [name, m] : g.teacher_head.gradients()) EXPECT_EQ(m.squaredNorm(), 0.0) << name;
  double student = 0.0;
  for (const auto& [name, m] : g.student_enc.gradients()) student += m.squaredNorm();
  EXPECT_GT(student, 0.0);
}

TEST(TrainStep, ClsOnlyObjectiveIgnoresPrediction) {
  StepFixture f;
  std::vector<MaskPartition> masks;
  Rng rng(3);
  for (const auto& b : f.batch) masks.push_back(sample_mask(static_cast<int>(b.rows()), 0.7, rng));
  StepSettings s;
  s.objective = Objective::cls_only;
  StepGraph<double> g(f.st.model, f.batch, masks, s);
  g.backward();
  double pred_grad = 0.0;
  for (const auto& [name, m] : g.predictor.gradients()) pred_grad += m.squaredNorm();
  EXPECT_GT(pred_grad, 0.0);  // the predictor still feeds the student head
  EXPECT_EQ(g.value(g.objective), g.value(g.l_cls));
}

TEST(TrainStep, NonFiniteLossAborts) {
  StepFixture f;
  f.batch[1](3, 7) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(f.step(ScheduleValues{1e-3, 0.99, 0.998, 0.04}), NumericalError);
  EXPECT_EQ(f.st.step, 0);
  f.batch.clear();
  EXPECT_THROW(f.step(ScheduleValues{1e-3, 0.99, 0.998, 0.04}), DomainError);
}

TEST(StepLog, FormatReadRoundTrip) {
  TempDir dir("steplog");
  TrainStepLog l;
  l.step = 12;
  l.epoch = 2;
  l.l_pred = 0.1234567890123;
  l.l_cls = 2.5;
  l.total = 1.3;
  l.teacher_entropy = 2.7;
  l.dominance = 0.0625;
  l.lr = 3e-4;
  l.lambda = 0.99995;
  l.zeta = 0.998;
  l.tau_t = 0.04;
  {
    std::ofstream f(dir / "s.csv");
    f << kStepLogHeader << "\n" << format_step_log(l) << "\n";
  }
  const auto back = read_step_log(dir / "s.csv");
  ASSERT_EQ(back.size(), 1U);
  EXPECT_EQ(format_step_log(back[0]), format_step_log(l));
  EXPECT_EQ(back[0].l_pred, l.l_pred);
  { std::ofstream(dir / "bad.csv") << "nope\n"; }
  EXPECT_THROW(read_step_log(dir / "bad.csv"), DomainError);
}

TEST_F(TrainerData, TwoEpochSmokeWritesTwoCheckpoints) {
  TempDir out("smoke");
  auto cfg = tiny_run_config(manifest_path_);
  cfg.train.epochs = 2;
  const auto r = train_loop(cfg, *clips_, out.path());
  EXPECT_EQ(r.checkpoints.size(), 2U);
  EXPECT_TRUE(std::filesystem::exists(out / "ckpt_epoch_0001.mpk"));
  EXPECT_TRUE(std::filesystem::exists(out / "ckpt_epoch_0002.mpk"));
  EXPECT_EQ(read_bytes(out / "last.mpk"), read_bytes(out / "ckpt_epoch_0002.mpk"));
  EXPECT_EQ(r.logs.size(), 4U);  // 16 clips / batch 8
  EXPECT_EQ(read_step_log(r.log_path).size(), 4U);
  EXPECT_EQ(r.state.epoch, 2);
}

TEST_F(TrainerData, LogBoundsHold) {
  auto cfg = tiny_run_config(manifest_path_);
  TrainLoopOptions o;
  o.write_files = false;
  const auto r = train_loop(cfg, *clips_, {}, o);
  const double lnk = std::log(static_cast<double>(cfg.train.K));
  for (const auto& l : r.logs) {
    EXPECT_GE(l.teacher_entropy, 0.0);
    EXPECT_LE(l.teacher_entropy, lnk + 1e-9);
    EXPECT_GE(l.dominance, 1.0 / cfg.train.K - 1e-9);
    EXPECT_LE(l.dominance, 1.0 + 1e-9);
    EXPECT_TRUE(std::isfinite(l.total));
  }
}

TEST_F(TrainerData, IdenticalSeedsGiveIdenticalTraces) {
  auto cfg = tiny_run_config(manifest_path_);
  cfg.train.epochs = 2;
  TrainLoopOptions o;
  o.write_files = false;
  const auto a = train_loop(cfg, *clips_, {}, o);
  const auto b = train_loop(cfg, *clips_, {}, o);
  ASSERT_EQ(a.logs.size(), b.logs.size());
  for (std::size_t i = 0; i < a.logs.size(); ++i) EXPECT_EQ(format_step_log(a.logs[i]), format_step_log(b.logs[i]));
  cfg.seed = 4;
  const auto c = train_loop(cfg, *clips_, {}, o);
  EXPECT_NE(format_step_log(a.logs[0]), format_step_log(c.logs[0]));
}

TEST_F(TrainerData, ResumeReproducesTheUninterruptedRun) {
  TempDir full("full"), split("split");
  auto cfg = tiny_run_config(manifest_path_);
  const auto ref = train_loop(cfg, *clips_, full.path());

  TrainLoopOptions first;
  first.stop_after_epoch = 1;
  train_loop(cfg, *clips_, split.path(), first);
  TrainLoopOptions second;
  second.resume_from = split / "ckpt_epoch_0001.mpk";
  const auto resumed = train_loop(cfg, *clips_, split.path(), second);

  EXPECT_EQ(read_bytes(full / "last.mpk"), read_bytes(split / "last.mpk"));
  EXPECT_EQ(read_bytes(full / "steps.csv"), read_bytes(split / "steps.csv"));
  EXPECT_EQ(resumed.logs.size(), 4U);
}

TEST_F(TrainerData, EmptyDatasetIsAnError) {
  EXPECT_THROW(train_loop(tiny_run_config(), ClipSet{}, {}), DomainError);
  EXPECT_THROW(ClipSet::load(Manifest{}), DomainError);
}
