#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "matpac/autograd.hpp"
#include "matpac/error.hpp"
#include "matpac/tensor.hpp"

namespace matpac {

/// Visible / masked split of a patch sequence. Both lists are sorted ascending.
struct MaskPartition {
  std::vector<int> visible;
  std::vector<int> masked;
  int n_total = 0;

  bool operator==(const MaskPartition&) const = default;
};

inline int masked_count(int n_total, double ratio) {
  return static_cast<int>(std::floor(ratio * static_cast<double>(n_total)));
}

/// Uniformly random subset of floor(ratio * n_total) positions is masked.
inline MaskPartition sample_mask(int n_total, double ratio, Rng& rng) {
  if (n_total < 2) throw DomainError("sample_mask: need at least 2 patches, got " + std::to_string(n_total));
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("sample_mask: ratio must lie in [0, 1)");
  const int n_masked = masked_count(n_total, ratio);
  if (n_masked > n_total - 1) throw DomainError("sample_mask: no visible patch would remain");
  std::vector<int> perm(static_cast<std::size_t>(n_total));
  std::iota(perm.begin(), perm.end(), 0);
  // Partial Fisher-Yates: the first n_masked slots become the masked set.
  for (int i = 0; i < n_masked; ++i) {
    std::uniform_int_distribution<int> pick(i, n_total - 1);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
  }
  MaskPartition p;
  p.n_total = n_total;
  p.masked.assign(perm.begin(), perm.begin() + n_masked);
  p.visible.assign(perm.begin() + n_masked, perm.end());
  std::sort(p.masked.begin(), p.masked.end());
  std::sort(p.visible.begin(), p.visible.end());
  return p;
}

/// Checks the partition invariants; throws ShapeError when violated.
inline void validate(const MaskPartition& p) {
  std::vector<int> seen(static_cast<std::size_t>(p.n_total), 0);
  for (const auto* list : {&p.visible, &p.masked})
    for (int i : *list) {
      if (i < 0 || i >= p.n_total) throw ShapeError("partition index out of range");
      if (seen[static_cast<std::size_t>(i)]++) throw ShapeError("partition index listed twice");
    }
  if (static_cast<int>(p.visible.size() + p.masked.size()) != p.n_total) throw ShapeError("partition not a cover");
}

/// Learned positional tables for the encoder and predictor, one row per grid position.
template <class T>
struct PositionalTable {
  Matrix<T> encoder_pos;    ///< [n_positions x d_model]
  Matrix<T> predictor_pos;  ///< [n_positions x d_pred]
};

enum class PositionTarget { encoder, predictor };

/// Row-wise sum of embeddings and their positional rows (positions 0..n-1).
template <class T>
Matrix<T> add_positions(const Matrix<T>& embeddings, const PositionalTable<T>& table, PositionTarget which) {
  const Matrix<T>& pos = which == PositionTarget::encoder ? table.encoder_pos : table.predictor_pos;
  if (embeddings.rows() > pos.rows() || embeddings.cols() != pos.cols())
    throw ShapeError("add_positions: embeddings " + std::to_string(embeddings.rows()) + "x" +
                     std::to_string(embeddings.cols()) + " vs table " + std::to_string(pos.rows()) + "x" +
                     std::to_string(pos.cols()));
  return embeddings + pos.topRows(embeddings.rows());
}

template <class T>
struct SplitRows {
  Matrix<T> visible;
  Matrix<T> masked;
};

template <class T>
SplitRows<T> split(const Matrix<T>& sequence, const MaskPartition& p) {
  if (sequence.rows() != p.n_total)
    throw ShapeError("split: sequence has " + std::to_string(sequence.rows()) + " rows, partition expects " +
                     std::to_string(p.n_total));
  return {gather_rows(sequence, p.visible), gather_rows(sequence, p.masked)};
}

/// Inverse of split: rows placed back at their original indices.
template <class T>
Matrix<T> merge(const SplitRows<T>& parts, const MaskPartition& p) {
  if (parts.visible.rows() != static_cast<Index>(p.visible.size()) ||
      parts.masked.rows() != static_cast<Index>(p.masked.size()) || parts.visible.cols() != parts.masked.cols())
    throw ShapeError("merge: part shapes do not match partition");
  Matrix<T> out(p.n_total, parts.visible.cols());
  for (std::size_t i = 0; i < p.visible.size(); ++i) out.row(p.visible[i]) = parts.visible.row(static_cast<Index>(i));
  for (std::size_t i = 0; i < p.masked.size(); ++i) out.row(p.masked[i]) = parts.masked.row(static_cast<Index>(i));
  return out;
}

}  // namespace matpac
