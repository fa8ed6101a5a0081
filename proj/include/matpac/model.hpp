#pragma once

// Student/teacher ViT encoders, the masked-latent predictor and the projection heads.
//
// Parameter names are flat strings ("blocks.0.attn.qkv.w", ...) so that the
// student and teacher stores line up entry by entry for the EMA and the checkpoint.

#include <string>
#include <vector>

#include "matpac/autograd.hpp"
#include "matpac/frontend.hpp"
#include "matpac/masking.hpp"
#include "matpac/tensor.hpp"

namespace matpac {

struct ModelConfig {
  int d_model = 64;
  int depth = 4;
  int n_heads = 4;
  int mlp_ratio = 4;
  int d_pred = 32;
  int pred_depth = 2;
  int pred_heads = 4;
  int head_hidden = 256;
  int head_bottleneck = 64;
  int K = 2048;
  int max_time_patches = 64;
  /// Add the predictor positional table to every token (true) or to mask tokens only.
  bool predictor_pos_all = true;
  double init_std = 0.02;
  double norm_eps = 1e-6;
  double l2_eps = 1e-6;

  int n_positions() const { return kFreqPatches * max_time_patches; }

  /// Sizes of the full-scale ViT-Base setup with the DINO head.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.d_model = 768;
    c.depth = 12;
    c.n_heads = 12;
    c.d_pred = 512;
    c.pred_depth = 8;
    c.pred_heads = 16;
    c.head_hidden = 2048;
    c.head_bottleneck = 256;
    c.K = 2048;
    return c;
  }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0) throw DomainError(std::string("model: ") + what + " must be positive");
    };
    positive(d_model, "d_model");
    positive(depth, "depth");
    positive(n_heads, "n_heads");
    positive(mlp_ratio, "mlp_ratio");
    positive(d_pred, "d_pred");
    positive(pred_depth, "pred_depth");
    positive(pred_heads, "pred_heads");
    positive(head_hidden, "head_hidden");
    positive(head_bottleneck, "head_bottleneck");
    positive(K, "K");
    positive(max_time_patches, "max_time_patches");
    if (d_model % n_heads != 0) throw DomainError("model: d_model must be divisible by n_heads");
    if (d_pred % pred_heads != 0) throw DomainError("model: d_pred must be divisible by pred_heads");
  }
};

namespace detail {

template <class T>
void add_linear(ParameterStore<T>& s, const std::string& name, int in, int out, Rng& rng) {
  s.add(name + ".w", xavier_uniform<T>(in, out, rng));
  s.add(name + ".b", Matrix<T>::Zero(1, out));
}

template <class T>
void add_norm(ParameterStore<T>& s, const std::string& name, int d) {
  s.add(name + ".g", Matrix<T>::Ones(1, d));
  s.add(name + ".b", Matrix<T>::Zero(1, d));
}

template <class T>
void add_blocks(ParameterStore<T>& s, int depth, int d, int mlp_ratio, Rng& rng) {
  for (int i = 0; i < depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    add_norm(s, p + "ln1", d);
    add_linear(s, p + "attn.qkv", d, 3 * d, rng);
    add_linear(s, p + "attn.proj", d, d, rng);
    add_norm(s, p + "ln2", d);
    add_linear(s, p + "mlp.fc1", d, mlp_ratio * d, rng);
    add_linear(s, p + "mlp.fc2", mlp_ratio * d, d, rng);
  }
}

template <class T>
Var linear(Binding<T>& b, const std::string& name, Var x) {
  return ops::linear(b.tape(), x, b(name + ".w"), b(name + ".b"));
}

template <class T>
Var norm(Binding<T>& b, const std::string& name, Var x, T eps) {
  return ops::layer_norm(b.tape(), x, b(name + ".g"), b(name + ".b"), eps);
}

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
template <class T>
Var block(Binding<T>& b, const std::string& p, Var x, int heads, T eps) {
  auto& t = b.tape();
  Var h = norm(b, p + "ln1", x, eps);
  h = ops::attention(t, linear(b, p + "attn.qkv", h), heads);
  x = ops::add(t, x, linear(b, p + "attn.proj", h));
  h = norm(b, p + "ln2", x, eps);
  h = ops::gelu(t, linear(b, p + "mlp.fc1", h));
  return ops::add(t, x, linear(b, p + "mlp.fc2", h));
}

}  // namespace detail

/// Encoder parameters θ/γ: patch projection, positional table, blocks, final norm.
template <class T>
ParameterStore<T> init_encoder(const ModelConfig& c, Rng& rng) {
  c.validate();
  ParameterStore<T> s;
  detail::add_linear(s, "patch_proj", kPatchDim, c.d_model, rng);
  s.add("pos", truncated_normal_matrix<T>(c.n_positions(), c.d_model, T(c.init_std), rng));
  detail::add_blocks(s, c.depth, c.d_model, c.mlp_ratio, rng);
  detail::add_norm(s, "norm", c.d_model);
  return s;
}

/// Predictor parameters υ, including the shared mask token and its own positional table.
template <class T>
ParameterStore<T> init_predictor(const ModelConfig& c, Rng& rng) {
  c.validate();
  ParameterStore<T> s;
  detail::add_linear(s, "embed", c.d_model, c.d_pred, rng);
  s.add("mask_token", truncated_normal_matrix<T>(1, c.d_pred, T(c.init_std), rng));
  s.add("pos", truncated_normal_matrix<T>(c.n_positions(), c.d_pred, T(c.init_std), rng));
  detail::add_blocks(s, c.pred_depth, c.d_pred, c.mlp_ratio, rng);
  detail::add_norm(s, "norm", c.d_pred);
  detail::add_linear(s, "out", c.d_pred, c.d_model, rng);
  return s;
}

/// Head parameters ψ/ω: three-layer MLP to the bottleneck plus a weight-normalized output layer.
template <class T>
ParameterStore<T> init_head(const ModelConfig& c, Rng& rng) {
  c.validate();
  ParameterStore<T> s;
  auto add_tn = [&](const std::string& name, int in, int out) {
    s.add(name + ".w", truncated_normal_matrix<T>(in, out, T(c.init_std), rng));
    s.add(name + ".b", Matrix<T>::Zero(1, out));
  };
  add_tn("fc1", c.d_model, c.head_hidden);
  add_tn("fc2", c.head_hidden, c.head_hidden);
  add_tn("fc3", c.head_hidden, c.head_bottleneck);
  s.add("last.v", truncated_normal_matrix<T>(c.K, c.head_bottleneck, T(c.init_std), rng));
  s.add("last.g", Matrix<T>::Ones(1, c.K));
  return s;
}

/// Encodes a set of patches [n x 256] sitting at the given grid positions.
template <class T>
Var encode(Binding<T>& b, const ModelConfig& c, Var patches, std::vector<int> positions) {
  auto& t = b.tape();
  if (t.value(patches).cols() != kPatchDim) throw ShapeError("encode: patches must have 256 columns");
  if (static_cast<Index>(positions.size()) != t.value(patches).rows())
    throw ShapeError("encode: one position per patch required");
  Var x = detail::linear(b, "patch_proj", patches);
  x = ops::add_gathered(t, x, b("pos"), std::move(positions));
  const T eps = static_cast<T>(c.norm_eps);
  for (int i = 0; i < c.depth; ++i) x = detail::block(b, "blocks." + std::to_string(i) + ".", x, c.n_heads, eps);
  return detail::norm(b, "norm", x, eps);
}

/// Predicts latents for the masked positions from the visible latents.
/// Returns rows in partition.masked order.
template <class T>
Var predict_masked(Binding<T>& b, const ModelConfig& c, Var z_visible, const MaskPartition& p) {
  auto& t = b.tape();
  if (p.masked.empty()) throw DomainError("predict_masked: nothing to predict (no masked positions)");
  if (t.value(z_visible).rows() != static_cast<Index>(p.visible.size()))
    throw ShapeError("predict_masked: visible latents do not match the partition");
  Var x = detail::linear(b, "embed", z_visible);
  x = ops::scatter_with_token(t, x, b("mask_token"), p.visible, p.masked);
  std::vector<int> pos(static_cast<std::size_t>(p.n_total));
  for (int i = 0; i < p.n_total; ++i) pos[static_cast<std::size_t>(i)] = i;
  if (!c.predictor_pos_all)
    for (int i : p.visible) pos[static_cast<std::size_t>(i)] = -1;
  x = ops::add_gathered(t, x, b("pos"), std::move(pos));
  const T eps = static_cast<T>(c.norm_eps);
  for (int i = 0; i < c.pred_depth; ++i)
    x = detail::block(b, "blocks." + std::to_string(i) + ".", x, c.pred_heads, eps);
  x = detail::norm(b, "norm", x, eps);
  x = detail::linear(b, "out", x);
  return ops::gather_rows(t, x, p.masked);
}

/// MLP part of the head followed by l2 normalization of each row.
template <class T>
Var head_bottleneck(Binding<T>& b, const ModelConfig& c, Var z) {
  auto& t = b.tape();
  Var h = ops::gelu(t, detail::linear(b, "fc1", z));
  h = ops::gelu(t, detail::linear(b, "fc2", h));
  h = detail::linear(b, "fc3", h);
  return ops::l2_normalize_rows(t, h, static_cast<T>(c.l2_eps));
}

/// Head logits [N x K]; no softmax.
template <class T>
Var head_forward(Binding<T>& b, const ModelConfig& c, Var z) {
  Var u = head_bottleneck(b, c, z);
  return ops::weight_norm_linear(b.tape(), u, b("last.v"), b("last.g"));
}

// Matrix-level conveniences for inference (no gradients recorded).

template <class T>
Matrix<T> encode(const ParameterStore<T>& params, const ModelConfig& c, const Matrix<T>& patches,
                 std::vector<int> positions) {
  Tape<T> tape;
  Binding<T> b(tape, params, false);
  return tape.value(encode(b, c, tape.constant(patches), std::move(positions)));
}

template <class T>
Matrix<T> predict_masked(const ParameterStore<T>& params, const ModelConfig& c, const Matrix<T>& z_visible,
                         const MaskPartition& p) {
  Tape<T> tape;
  Binding<T> b(tape, params, false);
  return tape.value(predict_masked(b, c, tape.constant(z_visible), p));
}

template <class T>
Matrix<T> head_forward(const ParameterStore<T>& params, const ModelConfig& c, const Matrix<T>& z) {
  if (!z.allFinite()) throw DomainError("head_forward: non-finite input");
  Tape<T> tape;
  Binding<T> b(tape, params, false);
  return tape.value(head_forward(b, c, tape.constant(z)));
}

/// Everything learnable plus the center. Teacher stores start as copies of the student.
template <class T>
struct ModelState {
  ModelConfig config;
  ParameterStore<T> student_encoder;
  ParameterStore<T> teacher_encoder;
  ParameterStore<T> predictor;
  ParameterStore<T> student_head;
  ParameterStore<T> teacher_head;
  Matrix<T> center;  ///< [1 x K]
  bool center_initialized = false;

  static ModelState init(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    ModelState s;
    s.config = c;
    Rng enc_rng = derive_rng(seed, {1});
    Rng pred_rng = derive_rng(seed, {2});
    Rng head_rng = derive_rng(seed, {3});
    s.student_encoder = init_encoder<T>(c, enc_rng);
    s.teacher_encoder = s.student_encoder;
    s.predictor = init_predictor<T>(c, pred_rng);
    s.student_head = init_head<T>(c, head_rng);
    s.teacher_head = s.student_head;
    s.center = Matrix<T>::Zero(1, c.K);
    return s;
  }
};

}  // namespace matpac
