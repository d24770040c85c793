#pragma once

#include <span>
#include <vector>

#include "constel/matrix.hpp"

namespace constel {

/// Gram matrix: out(i,j) = dot(row i, row j). Symmetric by construction
/// (upper triangle computed once and mirrored).
Matrix gram_matrix(const Matrix& x);

/// All pairwise squared Euclidean distances between rows.
/// Symmetric, zero diagonal; cancellation can never drive entries negative
/// because each entry is a direct sum of squares.
Matrix pairwise_sq_dists(const Matrix& x);

/// log(1 + sum_j exp(z_j)), evaluated as logsumexp over {0} u z so it cannot
/// overflow for |z_j| <= 700. Empty input yields 0 (empty sum).
double log1p_sum_exp(std::span<const double> z);

struct RowNormalizeResult {
  Matrix rows;
  /// true for rows whose norm fell below the 1e-12 floor and were divided by
  /// the floor instead of their own norm.
  std::vector<bool> floored;
};

inline constexpr double kNormFloor = 1e-12;

/// Scale each row to unit L2 norm. Rows with norm < 1e-12 are divided by
/// 1e-12 and flagged.
RowNormalizeResult l2_normalize_rows(const Matrix& x);

}  // namespace constel
