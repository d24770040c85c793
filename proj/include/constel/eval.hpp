#pragma once

#include <string>
#include <vector>

#include "constel/matrix.hpp"

namespace constel {

/// Per-split embedding quality metrics.
struct EvalReport {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double davies_bouldin = 0.0;
  double silhouette = 0.0;
  std::vector<double> per_class_recall;
  std::vector<std::size_t> support;  // truth count per class

  bool operator==(const EvalReport&) const = default;
};

struct ClassificationScores {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<double> per_class_recall;  // 0 for classes absent from truth
  std::vector<std::size_t> support;
};

/**
 * k-nearest-neighbour classification under the Euclidean metric. The k
 * neighbours are selected by ascending distance with ties broken by
 * ascending training index; vote ties go to the smallest class id. Both
 * rules make predictions deterministic.
 */
std::vector<int> knn_classify(const Matrix& train_emb,
                              const std::vector<int>& train_labels,
                              const Matrix& test_emb, int k);

/// Accuracy, balanced accuracy (mean per-class recall over classes present
/// in the truth) and the per-class breakdown.
ClassificationScores classification_scores(const std::vector<int>& predicted,
                                           const std::vector<int>& truth,
                                           int n_classes);

/**
 * Davies-Bouldin index: mean over clusters of the worst
 * (s_i + s_j) / d_ij ratio, with s_i the mean Euclidean distance of cluster
 * members to their centroid and d_ij the centroid distance. Lower is better.
 * Throws on coincident centroids (distance < 1e-12).
 */
double davies_bouldin(const Matrix& emb, const std::vector<int>& labels);

/**
 * Mean silhouette score in [-1, 1]: per point s = (b - a) / max(a, b) where
 * a is the mean distance to other members of its own cluster and b the
 * smallest mean distance to another cluster. Singleton-cluster points
 * contribute 0. Higher is better.
 */
double silhouette(const Matrix& emb, const std::vector<int>& labels);

/**
 * Projection onto the top-2 principal components of the mean-centered data.
 * Components are unit-norm, orthogonal, and sign-fixed so the
 * largest-magnitude coordinate of each component is positive.
 */
struct PcaResult {
  Matrix projected;      // N x 2
  Matrix components;     // 2 x D, rows are the principal directions
  double var1 = 0.0;     // eigenvalues of the covariance for PC1/PC2
  double var2 = 0.0;
};

PcaResult pca_project_2d(const Matrix& emb);

/// Scatter CSV with header "x,y,label", one row per embedding.
void write_scatter_csv(const std::string& path, const Matrix& projected,
                       const std::vector<int>& labels,
                       const std::vector<std::string>& label_names = {});

}  // namespace constel
