#pragma once

// Minimal reverse-mode differentiation over row-major matrices.
//
// A Tape records nodes in creation order, which is a topological order, so
// backward() is a single reverse sweep. Ops only record a backward closure
// when at least one input requires a gradient; a tape whose leaves are all
// constants therefore doubles as an inference engine.

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "matpac/tensor.hpp"

namespace matpac {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<T>&)>;

  Var constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }
  Var variable(Matrix<T> value) { return push(std::move(value), true, nullptr); }

  Var push(Matrix<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), requires_grad, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vars) const {
    for (auto v : vars)
      if (requires_grad(v)) return true;
    return false;
  }

  /// Gradient of the last backward() root w.r.t. `v`; zeros when nothing flowed into it.
  Matrix<T> grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Accumulates `g` into the gradient slot of `v` (no-op for constants).
  template <class Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Reverse sweep from a 1x1 root, seeded with `seed`.
  void backward(Var root, T seed = T(1)) {
    const auto& r = nodes_.at(root.id);
    if (r.value.rows() != 1 || r.value.cols() != 1) throw ShapeError("backward root must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!r.requires_grad) return;
    nodes_[root.id].grad = Matrix<T>::Constant(1, 1, seed);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      // The closure may append to other nodes' grads but never resizes nodes_.
      const Matrix<T> g = n.grad;
      n.backward(*this, g);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

/// Binds a ParameterStore's entries to tape leaves on first use.
template <class T>
class Binding {
 public:
  Binding(Tape<T>& tape, const ParameterStore<T>& store, bool trainable, std::string prefix = {})
      : tape_(&tape), store_(&store), trainable_(trainable), prefix_(std::move(prefix)) {}

  Var operator()(const std::string& name) {
    const std::string full = prefix_ + name;
    auto it = bound_->find(full);
    if (it != bound_->end()) return it->second;
    const auto& m = store_->at(full);
    Var v = trainable_ ? tape_->variable(m) : tape_->constant(m);
    bound_->emplace(full, v);
    return v;
  }

  /// Same store and leaves, names resolved under an extra prefix.
  Binding scoped(const std::string& sub) const {
    Binding b = *this;
    b.prefix_ = prefix_ + sub;
    return b;
  }

  Tape<T>& tape() const { return *tape_; }
  const ParameterStore<T>& store() const { return *store_; }

  /// Gradients for every store entry; entries never touched get zeros.
  ParameterStore<T> gradients() const {
    ParameterStore<T> out;
    for (const auto& [name, m] : *store_) {
      auto it = bound_->find(name);
      out.add(name, it == bound_->end() ? Matrix<T>::Zero(m.rows(), m.cols()) : tape_->grad(it->second));
    }
    return out;
  }

 private:
  Tape<T>* tape_;
  const ParameterStore<T>* store_;
  bool trainable_;
  std::string prefix_;
  std::shared_ptr<std::unordered_map<std::string, Var>> bound_ =
      std::make_shared<std::unordered_map<std::string, Var>>();
};

namespace ops {

template <class T>
Var detach(Tape<T>& tape, Var x) {
  return tape.constant(tape.value(x));
}

template <class T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix<T> out = A * B;
  if (!tape.any_requires_grad({a, b})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [a, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

/// x * W + b, with W [in x out] and b [1 x out].
template <class T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const auto& X = tape.value(x);
  const auto& W = tape.value(w);
  const auto& B = tape.value(b);
  if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols()) throw ShapeError("linear: shape mismatch");
  Matrix<T> out = X * W;
  out.rowwise() += B.row(0);
  if (!tape.any_requires_grad({x, w, b})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [x, w, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(x)) t.accumulate(x, g * t.value(w).transpose());
    if (t.requires_grad(w)) t.accumulate(w, t.value(x).transpose() * g);
    if (t.requires_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("add: shape mismatch");
  Matrix<T> out = A + B;
  if (!tape.any_requires_grad({a, b})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [a, b](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <class T>
Var scale(Tape<T>& tape, Var a, T s) {
  Matrix<T> out = tape.value(a) * s;
  if (!tape.requires_grad(a)) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [a, s](Tape<T>& t, const Matrix<T>& g) { t.accumulate(a, g * s); });
}

/// wa * a + wb * b for same-shaped operands.
template <class T>
Var weighted_sum(Tape<T>& tape, Var a, T wa, Var b, T wb) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("weighted_sum: shape mismatch");
  Matrix<T> out = wa * A + wb * B;
  if (!tape.any_requires_grad({a, b})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [a, wa, b, wb](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, g * wa);
    t.accumulate(b, g * wb);
  });
}

/// Sum of same-shaped nodes.
template <class T>
Var sum(Tape<T>& tape, std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("sum: no operands");
  Matrix<T> out = tape.value(xs[0]);
  bool rg = tape.requires_grad(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (tape.value(xs[i]).rows() != out.rows() || tape.value(xs[i]).cols() != out.cols())
      throw ShapeError("sum: shape mismatch");
    out += tape.value(xs[i]);
    rg = rg || tape.requires_grad(xs[i]);
  }
  if (!rg) return tape.constant(std::move(out));
  std::vector<Var> ids(xs.begin(), xs.end());
  return tape.push(std::move(out), true, [ids](Tape<T>& t, const Matrix<T>& g) {
    for (auto v : ids) t.accumulate(v, g);
  });
}

/// Rows of `x` gathered by `idx`.
template <class T>
Var gather_rows(Tape<T>& tape, Var x, std::vector<int> idx) {
  Matrix<T> out = matpac::gather_rows(tape.value(x), idx);
  if (!tape.requires_grad(x)) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [x, idx = std::move(idx)](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> gx = Matrix<T>::Zero(t.value(x).rows(), t.value(x).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(x, gx);
  });
}

/// x + table[idx], i.e. a per-row lookup added to x. A negative index leaves that row unchanged.
template <class T>
Var add_gathered(Tape<T>& tape, Var x, Var table, std::vector<int> idx) {
  const auto& X = tape.value(x);
  const auto& Tb = tape.value(table);
  if (static_cast<Index>(idx.size()) != X.rows() || Tb.cols() != X.cols())
    throw ShapeError("add_gathered: " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                     " input vs table width " + std::to_string(Tb.cols()) + " and " + std::to_string(idx.size()) +
                     " positions");
  Matrix<T> out = X;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    if (idx[i] >= Tb.rows())
      throw ShapeError("add_gathered: position " + std::to_string(idx[i]) + " outside table of " +
                       std::to_string(Tb.rows()) + " rows");
    out.row(static_cast<Index>(i)) += Tb.row(idx[i]);
  }
  if (!tape.any_requires_grad({x, table})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [x, table, idx = std::move(idx)](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x, g);
    if (t.requires_grad(table)) {
      Matrix<T> gt = Matrix<T>::Zero(t.value(table).rows(), t.value(table).cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] >= 0) gt.row(idx[i]) += g.row(static_cast<Index>(i));
      t.accumulate(table, gt);
    }
  });
}

/// Full-length sequence with rows of `visible` at `visible_idx` and the single
/// row `token` repeated at every `masked_idx`.
template <class T>
Var scatter_with_token(Tape<T>& tape, Var visible, Var token, std::vector<int> visible_idx,
                       std::vector<int> masked_idx) {
  const auto& V = tape.value(visible);
  const auto& M = tape.value(token);
  if (M.rows() != 1 || M.cols() != V.cols() || V.rows() != static_cast<Index>(visible_idx.size()))
    throw ShapeError("scatter_with_token: shape mismatch");
  const Index n = static_cast<Index>(visible_idx.size() + masked_idx.size());
  Matrix<T> out(n, V.cols());
  for (std::size_t i = 0; i < visible_idx.size(); ++i) out.row(visible_idx[i]) = V.row(static_cast<Index>(i));
  for (int j : masked_idx) out.row(j) = M.row(0);
  if (!tape.any_requires_grad({visible, token})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true,
                   [visible, token, vi = std::move(visible_idx), mi = std::move(masked_idx)](Tape<T>& t,
                                                                                            const Matrix<T>& g) {
                     if (t.requires_grad(visible)) {
                       Matrix<T> gv(static_cast<Index>(vi.size()), g.cols());
                       for (std::size_t i = 0; i < vi.size(); ++i) gv.row(static_cast<Index>(i)) = g.row(vi[i]);
                       t.accumulate(visible, gv);
                     }
                     if (t.requires_grad(token)) {
                       Matrix<T> gm = Matrix<T>::Zero(1, g.cols());
                       for (int j : mi) gm.row(0) += g.row(j);
                       t.accumulate(token, gm);
                     }
                   });
}

/// Row-wise layer normalization with gain and bias [1 x d].
template <class T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var bias, T eps = T(1e-6)) {
  const auto& X = tape.value(x);
  const auto& G = tape.value(gain);
  const auto& B = tape.value(bias);
  const Index n = X.rows();
  const Index d = X.cols();
  if (G.cols() != d || B.cols() != d) throw ShapeError("layer_norm: shape mismatch");
  Matrix<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const T mu = X.row(i).mean();
    const T var = (X.row(i).array() - mu).square().mean();
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (X.row(i).array() - mu) * inv_std(i);
  }
  Matrix<T> out = (xhat.array().rowwise() * G.row(0).array()).matrix();
  out.rowwise() += B.row(0);
  if (!tape.any_requires_grad({x, gain, bias})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true,
                   [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t,
                                                                                        const Matrix<T>& g) {
                     if (t.requires_grad(gain)) t.accumulate(gain, (g.array() * xhat.array()).colwise().sum().matrix());
                     if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
                     if (t.requires_grad(x)) {
                       const auto& G = t.value(gain);
                       Matrix<T> dxhat = (g.array().rowwise() * G.row(0).array()).matrix();
                       const Index d = dxhat.cols();
                       Matrix<T> dx(dxhat.rows(), d);
                       for (Index i = 0; i < dxhat.rows(); ++i) {
                         const T m1 = dxhat.row(i).mean();
                         const T m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
                         dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                       }
                       t.accumulate(x, dx);
                     }
                   });
}

/// Exact (erf-based) Gaussian error linear unit.
template <class T>
Var gelu(Tape<T>& tape, Var x) {
  const auto& X = tape.value(x);
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  Matrix<T> out = X.unaryExpr([inv_sqrt2](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
  if (!tape.requires_grad(x)) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [x, inv_sqrt2](Tape<T>& t, const Matrix<T>& g) {
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    Matrix<T> d = t.value(x).unaryExpr([inv_sqrt2, inv_sqrt_2pi](T v) {
      return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
    });
    t.accumulate(x, (g.array() * d.array()).matrix());
  });
}

/// Row-wise softmax of x / tau.
template <class T>
Matrix<T> softmax_rows(const Matrix<T>& x, T tau) {
  Matrix<T> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const T mx = x.row(i).maxCoeff();
    out.row(i) = ((x.row(i).array() - mx) / tau).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <class T>
Var softmax(Tape<T>& tape, Var x, T tau) {
  Matrix<T> out = softmax_rows(tape.value(x), tau);
  if (!tape.requires_grad(x)) return tape.constant(std::move(out));
  return tape.push(out, true, [x, tau, p = out](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> dx(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i) {
      const T dot = (g.row(i).array() * p.row(i).array()).sum();
      dx.row(i) = p.row(i).array() * (g.row(i).array() - dot) / tau;
    }
    t.accumulate(x, dx);
  });
}

/// Multi-head scaled dot-product self-attention over a packed [n x 3d] q|k|v input.
template <class T>
Var attention(Tape<T>& tape, Var qkv, int n_heads) {
  const auto& QKV = tape.value(qkv);
  if (QKV.cols() % (3 * n_heads) != 0) throw ShapeError("attention: width not divisible by 3*heads");
  const Index n = QKV.rows();
  const Index d = QKV.cols() / 3;
  const Index dh = d / n_heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Matrix<T>> probs(static_cast<std::size_t>(n_heads));
  Matrix<T> out(n, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto Q = QKV.middleCols(h * dh, dh);
    const auto K = QKV.middleCols(d + h * dh, dh);
    const auto V = QKV.middleCols(2 * d + h * dh, dh);
    Matrix<T> s = (Q * K.transpose()) * sc;
    probs[static_cast<std::size_t>(h)] = softmax_rows<T>(s, T(1));
    out.middleCols(h * dh, dh).noalias() = probs[static_cast<std::size_t>(h)] * V;
  }
  if (!tape.requires_grad(qkv)) return tape.constant(std::move(out));
  return tape.push(std::move(out), true,
                   [qkv, n_heads, d, dh, sc, probs = std::move(probs)](Tape<T>& t, const Matrix<T>& g) {
                     const auto& QKV = t.value(qkv);
                     Matrix<T> dqkv(QKV.rows(), QKV.cols());
                     for (int h = 0; h < n_heads; ++h) {
                       const auto& A = probs[static_cast<std::size_t>(h)];
                       const auto Q = QKV.middleCols(h * dh, dh);
                       const auto K = QKV.middleCols(d + h * dh, dh);
                       const auto V = QKV.middleCols(2 * d + h * dh, dh);
                       const auto dO = g.middleCols(h * dh, dh);
                       Matrix<T> dA = dO * V.transpose();
                       Matrix<T> dS(A.rows(), A.cols());
                       for (Index i = 0; i < A.rows(); ++i) {
                         const T dot = (dA.row(i).array() * A.row(i).array()).sum();
                         dS.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
                       }
                       dqkv.middleCols(h * dh, dh).noalias() = (dS * K) * sc;
                       dqkv.middleCols(d + h * dh, dh).noalias() = (dS.transpose() * Q) * sc;
                       dqkv.middleCols(2 * d + h * dh, dh).noalias() = A.transpose() * dO;
                     }
                     t.accumulate(qkv, dqkv);
                   });
}

/// Each row divided by (its l2 norm + eps).
template <class T>
Var l2_normalize_rows(Tape<T>& tape, Var x, T eps) {
  const auto& X = tape.value(x);
  Eigen::Matrix<T, Eigen::Dynamic, 1> norms = X.rowwise().norm();
  Matrix<T> out(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) out.row(i) = X.row(i) / (norms(i) + eps);
  if (!tape.requires_grad(x)) return tape.constant(std::move(out));
  return tape.push(out, true, [x, eps, norms, y = out](Tape<T>& t, const Matrix<T>& g) {
    const auto& X = t.value(x);
    Matrix<T> dx(X.rows(), X.cols());
    for (Index i = 0; i < X.rows(); ++i) {
      const T n = norms(i);
      const T denom = n + eps;
      if (n == T(0)) {
        dx.row(i) = g.row(i) / denom;
        continue;
      }
      // y = x / (n + eps); dy/dx = I/(n+eps) - x x^T / (n (n+eps)^2)
      const T proj = (g.row(i).array() * X.row(i).array()).sum();
      dx.row(i) = g.row(i) / denom - X.row(i) * (proj / (n * denom * denom));
    }
    t.accumulate(x, dx);
  });
}

/// Weight-normalized linear map without bias: out = x * (diag(g) * V / ||V_k||)^T.
/// V is [K x b] (one direction per output unit), g is [1 x K].
template <class T>
Var weight_norm_linear(Tape<T>& tape, Var x, Var v, Var gain) {
  const auto& X = tape.value(x);
  const auto& Vm = tape.value(v);
  const auto& G = tape.value(gain);
  if (X.cols() != Vm.cols() || G.rows() != 1 || G.cols() != Vm.rows())
    throw ShapeError("weight_norm_linear: shape mismatch");
  Eigen::Matrix<T, Eigen::Dynamic, 1> vnorm = Vm.rowwise().norm();
  Matrix<T> dir(Vm.rows(), Vm.cols());
  for (Index k = 0; k < Vm.rows(); ++k) dir.row(k) = Vm.row(k) / vnorm(k);
  Matrix<T> weff = (dir.array().colwise() * G.row(0).transpose().array()).matrix();
  Matrix<T> out = X * weff.transpose();
  if (!tape.any_requires_grad({x, v, gain})) return tape.constant(std::move(out));
  return tape.push(std::move(out), true,
                   [x, v, gain, dir = std::move(dir), weff = std::move(weff), vnorm = std::move(vnorm)](
                       Tape<T>& t, const Matrix<T>& g) {
                     if (t.requires_grad(x)) t.accumulate(x, g * weff);
                     const bool need_v = t.requires_grad(v);
                     const bool need_g = t.requires_grad(gain);
                     if (!need_v && !need_g) return;
                     Matrix<T> dweff = g.transpose() * t.value(x);  // [K x b]
                     const auto& G = t.value(gain);
                     Matrix<T> dgain(1, dir.rows());
                     for (Index k = 0; k < dir.rows(); ++k) dgain(0, k) = (dweff.row(k).array() * dir.row(k).array()).sum();
                     if (need_g) t.accumulate(gain, dgain);
                     if (need_v) {
                       Matrix<T> dv(dir.rows(), dir.cols());
                       for (Index k = 0; k < dir.rows(); ++k)
                         dv.row(k) = (G(0, k) / vnorm(k)) * (dweff.row(k) - dir.row(k) * dgain(0, k));
                       t.accumulate(v, dv);
                     }
                   });
}

}  // namespace ops
}  // namespace matpac
