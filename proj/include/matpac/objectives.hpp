#pragma once

// Prediction loss, sharpened/centered distributions, classification loss,
// centering and the weighted total. Each loss has a plain matrix form and a
// tape form; the tape forms never send gradient into their target operand.

#include <cmath>
#include <string>

#include "matpac/autograd.hpp"
#include "matpac/error.hpp"
#include "matpac/tensor.hpp"

namespace matpac {

enum class Reduction { mean, sum };

inline constexpr double kCrossEntropyEps = 1e-7;

template <class T>
struct CenterState {
  Matrix<T> C;  ///< [1 x K]
  double momentum = 0.9;
};

struct LossBreakdown {
  double l_pred = 0.0;
  double l_cls = 0.0;
  double total = 0.0;
  double alpha = 0.5;
};

namespace detail {

template <class T>
T safe_norm(const auto& row) {
  return std::max(row.norm(), T(1e-12));
}

template <class T>
void check_distribution(const Matrix<T>& p, const char* what) {
  for (Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < T(0)).any()) throw DomainError(std::string(what) + ": negative probability");
    const double s = static_cast<double>(p.row(i).sum());
    if (std::abs(s - 1.0) > 1e-5)
      throw DomainError(std::string(what) + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

inline void check_tau(double tau, const char* what) {
  if (!(tau > 0.0)) throw DomainError(std::string(what) + ": temperature must be positive");
}

template <class T>
T cross_entropy_value(const Matrix<T>& p_hat, const Matrix<T>& p, Reduction red) {
  const T eps = static_cast<T>(kCrossEntropyEps);
  T total = 0;
  for (Index i = 0; i < p.rows(); ++i) total -= (p.row(i).array() * p_hat.row(i).array().max(eps).log()).sum();
  return red == Reduction::mean ? total / static_cast<T>(p.rows()) : total;
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("total_loss: alpha must lie in [0, 1]");
}

}  // namespace detail

/// Squared distance between l2-normalized rows, reduced over rows.
template <class T>
T pred_loss(const Matrix<T>& z_hat, const Matrix<T>& z, Reduction red = Reduction::mean) {
  if (z_hat.rows() != z.rows() || z_hat.cols() != z.cols()) throw ShapeError("pred_loss: shape mismatch");
  if (z_hat.rows() == 0) throw DomainError("pred_loss: no rows");
  T total = 0;
  for (Index i = 0; i < z.rows(); ++i) {
    const auto a = z_hat.row(i) / detail::safe_norm<T>(z_hat.row(i));
    const auto b = z.row(i) / detail::safe_norm<T>(z.row(i));
    total += (a - b).squaredNorm();
  }
  return red == Reduction::mean ? total / static_cast<T>(z.rows()) : total;
}

template <class T>
Matrix<T> student_probs(const Matrix<T>& logits, double tau_s) {
  detail::check_tau(tau_s, "student_probs");
  return ops::softmax_rows<T>(logits, static_cast<T>(tau_s));
}

template <class T>
Matrix<T> teacher_probs(const Matrix<T>& logits, double tau_t, const CenterState<T>& center) {
  detail::check_tau(tau_t, "teacher_probs");
  if (center.C.cols() != logits.cols()) throw ShapeError("teacher_probs: center length differs from K");
  Matrix<T> shifted = logits.rowwise() - center.C.row(0);
  return ops::softmax_rows<T>(shifted, static_cast<T>(tau_t));
}

/// Cross-entropy -sum_k p log(max(p_hat, eps)), reduced over rows.
template <class T>
T cls_loss(const Matrix<T>& p_hat, const Matrix<T>& p, Reduction red = Reduction::mean) {
  if (p_hat.rows() != p.rows() || p_hat.cols() != p.cols()) throw ShapeError("cls_loss: shape mismatch");
  if (p.rows() == 0) throw DomainError("cls_loss: no rows");
  detail::check_distribution(p_hat, "cls_loss");
  detail::check_distribution(p, "cls_loss");
  return detail::cross_entropy_value(p_hat, p, red);
}

template <class T>
T total_loss(T l_cls, T l_pred, double alpha) {
  detail::check_alpha(alpha);
  const T a = static_cast<T>(alpha);
  return (T(1) - a) * l_cls + a * l_pred;
}

/// C' = m C + (1 - m) mean_rows(teacher_logits).
template <class T>
CenterState<T> update_center(const CenterState<T>& state, const Matrix<T>& teacher_logits) {
  if (teacher_logits.rows() == 0) throw DomainError("update_center: no logits");
  if (teacher_logits.cols() != state.C.cols()) throw ShapeError("update_center: K mismatch");
  CenterState<T> out = state;
  const T m = static_cast<T>(state.momentum);
  out.C = m * state.C + (T(1) - m) * teacher_logits.colwise().mean();
  return out;
}

namespace ops {

/// Tape form of pred_loss; gradient flows into z_hat only.
template <class T>
Var pred_loss(Tape<T>& tape, Var z_hat, Var z, Reduction red = Reduction::mean) {
  const auto& A = tape.value(z_hat);
  const auto& B = tape.value(z);
  Matrix<T> out(1, 1);
  out(0, 0) = matpac::pred_loss<T>(A, B, red);
  if (!tape.requires_grad(z_hat)) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [z_hat, z, red](Tape<T>& t, const Matrix<T>& g) {
    const auto& A = t.value(z_hat);
    const auto& B = t.value(z);
    const T s = g(0, 0) / (red == Reduction::mean ? static_cast<T>(A.rows()) : T(1));
    Matrix<T> d(A.rows(), A.cols());
    for (Index i = 0; i < A.rows(); ++i) {
      const T na = matpac::detail::safe_norm<T>(A.row(i));
      const auto a = (A.row(i) / na).eval();
      const auto b = (B.row(i) / matpac::detail::safe_norm<T>(B.row(i))).eval();
      const auto da = (T(2) * (a - b)).eval();
      d.row(i) = (da - a * a.dot(da)) * (s / na);
    }
    t.accumulate(z_hat, d);
  });
}

/// Tape form of cls_loss on probabilities; gradient flows into p_hat only.
template <class T>
Var cross_entropy(Tape<T>& tape, Var p_hat, Var p, Reduction red = Reduction::mean) {
  Matrix<T> out(1, 1);
  const auto& Q = tape.value(p_hat);
  const auto& P = tape.value(p);
  if (Q.rows() != P.rows() || Q.cols() != P.cols()) throw ShapeError("cross_entropy: shape mismatch");
  if (P.rows() == 0) throw DomainError("cross_entropy: no rows");
  out(0, 0) = matpac::detail::cross_entropy_value<T>(Q, P, red);
  if (!tape.requires_grad(p_hat)) return tape.constant(std::move(out));
  return tape.push(std::move(out), true, [p_hat, p, red](Tape<T>& t, const Matrix<T>& g) {
    const auto& Q = t.value(p_hat);
    const auto& P = t.value(p);
    const T s = g(0, 0) / (red == Reduction::mean ? static_cast<T>(Q.rows()) : T(1));
    const T eps = static_cast<T>(kCrossEntropyEps);
    t.accumulate(p_hat, (Q.array() > eps).select(-s * P.array() / Q.array(), T(0)).matrix());
  });
}

template <class T>
Var total_loss(Tape<T>& tape, Var l_cls, Var l_pred, double alpha) {
  matpac::detail::check_alpha(alpha);
  const T a = static_cast<T>(alpha);
  return weighted_sum(tape, l_cls, T(1) - a, l_pred, a);
}

}  // namespace ops
}  // namespace matpac
