#include <fstream>

#include <gtest/gtest.h>

#include "matpac/container.hpp"
#include "matpac/trainer.hpp"
#include "support.hpp"

using namespace matpac;
using testing_support::random_matrix;
using testing_support::TempDir;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 16;
  c.depth = 1;
  c.n_heads = 2;
  c.d_pred = 8;
  c.pred_depth = 1;
  c.pred_heads = 2;
  c.head_hidden = 16;
  c.head_bottleneck = 8;
  c.K = 12;
  c.max_time_patches = 4;
  return c;
}

TrainState<float> trained_state() {
  TrainState<float> st;
  st.model = ModelState<float>::init(tiny(), 3);
  st.stats = {-4.25, 2.5};
  // A few optimizer steps so moments are populated.
  std::vector<Matrix<float>> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(random_matrix(10, kPatchDim, 10 + i).cast<float>());
  TrainConfig tc;
  tc.mask_ratio = 0.5;
  Rng rng(1);
  for (int s = 0; s < 2; ++s) train_step<float>(st, batch, tc, ScheduleValues{1e-3, 0.99, 0.998, 0.04}, rng);
  st.epoch = 1;
  return st;
}

}  // namespace

TEST(Container, RoundTripPreservesArraysMetaAndBytes) {
  ArrayContainer c("demo");
  c.meta()["note"] = "hello";
  c.put("a", random_matrix(3, 5, 1));
  c.put("b", random_matrix(1, 7, 2).cast<float>().eval());
  c.put("empty", Matrix<double>(0, 4));
  const auto bytes = c.serialize();
  EXPECT_EQ(bytes.substr(0, 8), std::string("MATPACK\0", 8));
  const auto back = ArrayContainer::deserialize(bytes);
  EXPECT_EQ(back.kind(), "demo");
  EXPECT_EQ(back.meta()["note"], "hello");
  EXPECT_EQ(back.get<double>("a"), c.get<double>("a"));
  EXPECT_EQ(back.get<float>("b"), c.get<float>("b"));
  EXPECT_EQ(back.get<double>("empty").rows(), 0);
  EXPECT_EQ(back.serialize(), bytes);
}

TEST(Container, Errors) {
  ArrayContainer c;
  c.put("a", random_matrix(2, 2, 1));
  EXPECT_THROW(c.put("a", random_matrix(2, 2, 1)), CheckpointError);
  EXPECT_THROW(c.get<double>("missing"), CheckpointError);
  EXPECT_THROW(c.get<float>("a"), CheckpointError);
  EXPECT_THROW(c.get<double>("a", 3, 2), ShapeError);

  const auto good = c.serialize();
  EXPECT_THROW(ArrayContainer::deserialize("garbage"), CheckpointError);
  auto wrong_magic = good;
  wrong_magic[0] = 'X';
  EXPECT_THROW(ArrayContainer::deserialize(wrong_magic), CheckpointError);
  auto version = good;
  version[8] = 2;
  try {
    ArrayContainer::deserialize(version);
    FAIL() << "version mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  auto flipped = good;
  flipped.back() ^= 0x01;
  EXPECT_THROW(ArrayContainer::deserialize(flipped), CheckpointError);
  EXPECT_THROW(ArrayContainer::deserialize(good.substr(0, good.size() - 3)), CheckpointError);
  EXPECT_THROW(ArrayContainer::load("/nonexistent/file.mpk"), CheckpointError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir("ckpt");
  const auto st = trained_state();
  const std::string cfg_text = "{\"seed\": 3}";
  save_checkpoint(dir / "a.mpk", st, cfg_text, 3);
  const auto loaded = load_checkpoint<float>(dir / "a.mpk");
  save_checkpoint(dir / "b.mpk", loaded.state, loaded.config_text, loaded.seed);
  EXPECT_EQ(read_bytes(dir / "a.mpk"), read_bytes(dir / "b.mpk"));
  EXPECT_EQ(loaded.config_text, cfg_text);
  EXPECT_EQ(loaded.seed, 3U);
  EXPECT_EQ(loaded.state.step, st.step);
  EXPECT_EQ(loaded.state.epoch, 1);
  EXPECT_EQ(loaded.state.stats.mean, -4.25);
  EXPECT_EQ(loaded.state.optimizer.steps(), 2);
  EXPECT_TRUE(loaded.state.model.center_initialized);
  EXPECT_EQ(loaded.state.model.center, st.model.center);
  for (std::size_t i = 0; i < st.model.teacher_encoder.size(); ++i)
    EXPECT_EQ(loaded.state.model.teacher_encoder[i].second, st.model.teacher_encoder[i].second);
}

TEST(Checkpoint, HoldsStudentAndTeacher) {
  TempDir dir("ckpt_names");
  save_checkpoint(dir / "c.mpk", trained_state(), "{}", 0);
  const auto c = ArrayContainer::load(dir / "c.mpk");
  EXPECT_TRUE(c.has("student_encoder.patch_proj.w"));
  EXPECT_TRUE(c.has("teacher_encoder.patch_proj.w"));
  EXPECT_TRUE(c.has("student_head.last.v"));
  EXPECT_TRUE(c.has("teacher_head.last.v"));
  EXPECT_TRUE(c.has("predictor.mask_token"));
  EXPECT_TRUE(c.has("center"));
  EXPECT_TRUE(c.has("opt.m.encoder.patch_proj.w"));
  EXPECT_NE(c.get<float>("student_encoder.patch_proj.w"), c.get<float>("teacher_encoder.patch_proj.w"));
  EXPECT_EQ(c.kind(), kCheckpointKind);
}

TEST(Checkpoint, MismatchedKIsAShapeError) {
  TempDir dir("ckpt_k");
  save_checkpoint(dir / "k.mpk", trained_state(), "{}", 0);
  auto other = tiny();
  other.K = 24;
  EXPECT_THROW(load_checkpoint<float>(dir / "k.mpk", &other), ShapeError);
  auto wider = tiny();
  wider.d_model = 32;
  wider.n_heads = 4;
  EXPECT_THROW(load_checkpoint<float>(dir / "k.mpk", &wider), ShapeError);
  const auto same = tiny();
  EXPECT_NO_THROW(load_checkpoint<float>(dir / "k.mpk", &same));
}

TEST(Checkpoint, CorruptOrForeignFilesAreRejected) {
  TempDir dir("ckpt_bad");
  save_checkpoint(dir / "x.mpk", trained_state(), "{}", 0);
  auto bytes = read_bytes(dir / "x.mpk");
  bytes[bytes.size() / 2 + 40] ^= 0x5A;
  write_bytes(dir / "corrupt.mpk", bytes);
  EXPECT_THROW(load_checkpoint<float>(dir / "corrupt.mpk"), CheckpointError);

  ArrayContainer cache("matpac-embeddings");
  cache.save(dir / "foreign.mpk");
  EXPECT_THROW(load_checkpoint<float>(dir / "foreign.mpk"), CheckpointError);

  write_bytes(dir / "empty.mpk", "");
  EXPECT_THROW(load_checkpoint<float>(dir / "empty.mpk"), CheckpointError);
  // f64 arrays cannot be loaded as f32.
  TrainState<double> d;
  d.model = ModelState<double>::init(tiny(), 1);
  save_checkpoint(dir / "f64.mpk", d, "{}", 1);
  EXPECT_THROW(load_checkpoint<float>(dir / "f64.mpk"), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint<double>(dir / "f64.mpk"));
}
