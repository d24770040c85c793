#pragma once

#include <functional>
#include <vector>

#include "constel/batching.hpp"
#include "constel/matrix.hpp"

namespace constel {

/**
 * Scalar loss plus its analytic gradient w.r.t. the input embeddings.
 * Gradient rows for embeddings not referenced by any pair/triplet/K-plet are
 * exactly zero. For npair_loss the gradient covers both arrays stacked:
 * rows [0, N) for the anchors, rows [N, 2N) for the positives.
 */
struct LossResult {
  double value = 0.0;
  Matrix grad;
};

/// Shared loss hyperparameters. margin is the contrastive margin, alpha the
/// triplet slack, k_negatives the number of negatives per constellation
/// K-plet.
struct LossHyper {
  double margin = 1.0;
  double alpha = 0.2;
  int k_negatives = 3;

  void validate() const;
  bool operator==(const LossHyper&) const = default;
};

/// A pair of embedding rows; different_class corresponds to label y = 1 in
/// the contrastive formulation (same-class pairs have y = 0).
struct ContrastivePair {
  std::size_t i = 0;
  std::size_t j = 0;
  bool different_class = false;
};

/**
 * Contrastive pair loss over embeddings X:
 *   (1 / 2P) * sum [ (1-y) d^2 + y max(0, m - d)^2 ],  d = ||x_i - x_j||.
 * A negative pair already at distance >= m contributes nothing; the gradient
 * of a negative pair at d = 0 is defined as 0.
 */
LossResult contrastive_loss(const std::vector<ContrastivePair>& pairs,
                            const Matrix& x, double margin);

/**
 * Triplet loss with squared distances:
 *   (1 / T) * sum max(0, ||a - p||^2 - ||a - n||^2 + alpha).
 * Inactive triplets (hinge at 0, including exactly 0) contribute no gradient.
 */
LossResult triplet_loss(const TripletIndexSet& triplets, const Matrix& x,
                        double alpha);

/**
 * Multiclass N-pair loss over two aligned embedding arrays where row i of
 * both belongs to class i:
 *   (1 / N) * sum_i log(1 + sum_{j != i} exp(a_i . p_j - a_i . p_i)).
 * Gradient is returned stacked: anchors first, positives below.
 */
LossResult npair_loss(const Matrix& anchors, const Matrix& positives);

/**
 * Constellation loss. Each K-plet holds an anchor, one same-class positive
 * and exactly k_negatives negatives; the entry contributes
 *   log(1 + sum_j exp(a . n_j - a . p))
 * and the total is averaged over entries. Strictly positive for finite
 * inputs.
 */
LossResult constellation_loss(const ConstellationBatch& batch, const Matrix& x,
                              int k_negatives);

/**
 * Central-difference gradient (L(x+h) - L(x-h)) / 2h per entry: the
 * independent oracle against which the analytic gradients are checked.
 */
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_eval,
                        const Matrix& x, double h = 1e-5);

}  // namespace constel
