#include "constel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "constel/numerics.hpp"

namespace constel {

namespace {

std::vector<int> present_classes(const std::vector<int>& labels) {
  std::vector<int> classes;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("labels must be non-negative");
    if (std::find(classes.begin(), classes.end(), l) == classes.end()) {
      classes.push_back(l);
    }
  }
  std::sort(classes.begin(), classes.end());
  return classes;
}

}  // namespace

std::vector<int> knn_classify(const Matrix& train_emb,
                              const std::vector<int>& train_labels,
                              const Matrix& test_emb, int k) {
  const std::size_t n_train = train_emb.rows();
  if (n_train == 0) throw std::invalid_argument("knn_classify: empty train set");
  if (train_labels.size() != n_train) {
    throw std::invalid_argument("knn_classify: labels length does not match train rows");
  }
  if (k < 1 || static_cast<std::size_t>(k) > n_train) {
    throw std::invalid_argument("knn_classify: k must be in [1, train size]");
  }
  if (test_emb.cols() != train_emb.cols()) {
    throw std::invalid_argument("knn_classify: dimension mismatch");
  }

  int max_label = 0;
  for (int l : train_labels) {
    if (l < 0) throw std::invalid_argument("knn_classify: labels must be non-negative");
    max_label = std::max(max_label, l);
  }

  std::vector<int> predictions;
  predictions.reserve(test_emb.rows());
  std::vector<std::pair<double, std::size_t>> dists(n_train);
  std::vector<int> votes(max_label + 1);
  for (std::size_t q = 0; q < test_emb.rows(); ++q) {
    const auto query = test_emb.row(q);
    for (std::size_t i = 0; i < n_train; ++i) {
      dists[i] = {squared_distance(query, train_emb.row(i)), i};
    }
    // pair ordering ranks equidistant neighbours by ascending index
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    std::fill(votes.begin(), votes.end(), 0);
    for (int i = 0; i < k; ++i) votes[train_labels[dists[i].second]] += 1;
    int best = 0;
    for (int c = 1; c <= max_label; ++c) {
      if (votes[c] > votes[best]) best = c;  // ties keep the smaller id
    }
    predictions.push_back(best);
  }
  return predictions;
}

ClassificationScores classification_scores(const std::vector<int>& predicted,
                                           const std::vector<int>& truth,
                                           int n_classes) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("classification_scores: length mismatch");
  }
  if (truth.empty()) throw std::invalid_argument("classification_scores: empty input");

  ClassificationScores s;
  s.per_class_recall.assign(n_classes, 0.0);
  s.support.assign(n_classes, 0);
  std::vector<std::size_t> correct(n_classes, 0);
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 ||
        predicted[i] >= n_classes) {
      throw std::invalid_argument("classification_scores: label out of range");
    }
    s.support[truth[i]] += 1;
    if (predicted[i] == truth[i]) {
      correct[truth[i]] += 1;
      total_correct += 1;
    }
  }
  s.accuracy = static_cast<double>(total_correct) / static_cast<double>(truth.size());
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (s.support[c] == 0) continue;  // absent classes excluded from the mean
    s.per_class_recall[c] =
        static_cast<double>(correct[c]) / static_cast<double>(s.support[c]);
    recall_sum += s.per_class_recall[c];
    present += 1;
  }
  s.balanced_accuracy = recall_sum / static_cast<double>(present);
  return s;
}

double davies_bouldin(const Matrix& emb, const std::vector<int>& labels) {
  if (labels.size() != emb.rows()) {
    throw std::invalid_argument("davies_bouldin: labels length does not match rows");
  }
  const auto classes = present_classes(labels);
  const std::size_t c = classes.size();
  if (c < 2) throw std::invalid_argument("davies_bouldin: need >=2 classes");

  const std::size_t dim = emb.cols();
  Matrix centroids(c, dim);
  std::vector<std::size_t> counts(c, 0);
  std::vector<std::size_t> class_pos(*std::max_element(classes.begin(), classes.end()) + 1);
  for (std::size_t ci = 0; ci < c; ++ci) class_pos[classes[ci]] = ci;

  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const std::size_t ci = class_pos[labels[i]];
    auto cen = centroids.row(ci);
    const auto x = emb.row(i);
    for (std::size_t d = 0; d < dim; ++d) cen[d] += x[d];
    counts[ci] += 1;
  }
  for (std::size_t ci = 0; ci < c; ++ci) {
    auto cen = centroids.row(ci);
    for (std::size_t d = 0; d < dim; ++d) cen[d] /= static_cast<double>(counts[ci]);
  }

  // mean distance of members to their centroid
  std::vector<double> scatter(c, 0.0);
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const std::size_t ci = class_pos[labels[i]];
    scatter[ci] += std::sqrt(squared_distance(emb.row(i), centroids.row(ci)));
  }
  for (std::size_t ci = 0; ci < c; ++ci) scatter[ci] /= static_cast<double>(counts[ci]);

  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == i) continue;
      const double d = std::sqrt(squared_distance(centroids.row(i), centroids.row(j)));
      if (d < 1e-12) {
        throw std::runtime_error("davies_bouldin: degenerate centroids (classes " +
                                 std::to_string(classes[i]) + " and " +
                                 std::to_string(classes[j]) + ")");
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / d);
    }
    total += worst;
  }
  return total / static_cast<double>(c);
}

double silhouette(const Matrix& emb, const std::vector<int>& labels) {
  const std::size_t n = emb.rows();
  if (labels.size() != n) {
    throw std::invalid_argument("silhouette: labels length does not match rows");
  }
  if (n < 3) throw std::invalid_argument("silhouette: need >=3 points");
  const auto classes = present_classes(labels);
  const std::size_t c = classes.size();
  if (c < 2) throw std::invalid_argument("silhouette: need >=2 classes");

  std::vector<std::size_t> class_pos(*std::max_element(classes.begin(), classes.end()) + 1);
  for (std::size_t ci = 0; ci < c; ++ci) class_pos[classes[ci]] = ci;
  std::vector<std::size_t> counts(c, 0);
  for (int l : labels) counts[class_pos[l]] += 1;

  // accumulate sum of distances from every point to each cluster
  Matrix cluster_dist(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = emb.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::sqrt(squared_distance(xi, emb.row(j)));
      cluster_dist(i, class_pos[labels[j]]) += d;
      cluster_dist(j, class_pos[labels[i]]) += d;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = class_pos[labels[i]];
    if (counts[own] == 1) continue;  // singleton contributes s = 0
    const double a = cluster_dist(i, own) / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < c; ++ci) {
      if (ci == own) continue;
      b = std::min(b, cluster_dist(i, ci) / static_cast<double>(counts[ci]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

namespace {

/// Cyclic Jacobi eigendecomposition for symmetric matrices. Deterministic
/// sweep order; plenty for the covariance sizes this project sees.
void jacobi_eigen(Matrix a, std::vector<double>& eigenvalues, Matrix& eigenvectors) {
  const std::size_t n = a.rows();
  eigenvectors = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) eigenvectors(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cos_r = 1.0 / std::sqrt(t * t + 1.0);
        const double sin_r = t * cos_r;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = cos_r * aip - sin_r * aiq;
          a(i, q) = sin_r * aip + cos_r * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a(p, i);
          const double aqi = a(q, i);
          a(p, i) = cos_r * api - sin_r * aqi;
          a(q, i) = sin_r * api + cos_r * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = eigenvectors(i, p);
          const double viq = eigenvectors(i, q);
          eigenvectors(i, p) = cos_r * vip - sin_r * viq;
          eigenvectors(i, q) = sin_r * vip + cos_r * viq;
        }
      }
    }
  }
  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a(i, i);
}

}  // namespace

PcaResult pca_project_2d(const Matrix& emb) {
  const std::size_t n = emb.rows();
  const std::size_t dim = emb.cols();
  if (n < 3 || dim < 2) {
    throw std::invalid_argument("pca_project_2d: need >=3 points of dimension >=2");
  }

  Matrix centered = emb;
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += centered(i, d);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centered(i, d) -= mean;
  }
  if (centered.max_abs() < 1e-12) {
    throw std::invalid_argument("pca_project_2d: all points identical (rank 0)");
  }

  Matrix cov(dim, dim);
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += centered(i, a) * centered(i, b);
      s /= static_cast<double>(n - 1);
      cov(a, b) = s;
      cov(b, a) = s;
    }
  }

  std::vector<double> eigenvalues;
  Matrix eigenvectors;
  jacobi_eigen(cov, eigenvalues, eigenvectors);

  // top-2 eigenvalues, ties resolved by column index
  std::vector<std::size_t> order(dim);
  for (std::size_t i = 0; i < dim; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (eigenvalues[a] != eigenvalues[b]) return eigenvalues[a] > eigenvalues[b];
    return a < b;
  });

  PcaResult out;
  out.components = Matrix(2, dim);
  out.var1 = eigenvalues[order[0]];
  out.var2 = eigenvalues[order[1]];
  for (int pc = 0; pc < 2; ++pc) {
    const std::size_t col = order[pc];
    auto v = out.components.row(pc);
    for (std::size_t d = 0; d < dim; ++d) v[d] = eigenvectors(d, col);
    // sign convention: largest-magnitude coordinate positive
    std::size_t arg = 0;
    for (std::size_t d = 1; d < dim; ++d) {
      if (std::abs(v[d]) > std::abs(v[arg])) arg = d;
    }
    if (v[arg] < 0.0) {
      for (std::size_t d = 0; d < dim; ++d) v[d] = -v[d];
    }
  }

  out.projected = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    out.projected(i, 0) = dot(centered.row(i), out.components.row(0));
    out.projected(i, 1) = dot(centered.row(i), out.components.row(1));
  }
  return out;
}

void write_scatter_csv(const std::string& path, const Matrix& projected,
                       const std::vector<int>& labels,
                       const std::vector<std::string>& label_names) {
  if (projected.cols() != 2 || projected.rows() != labels.size()) {
    throw std::invalid_argument("write_scatter_csv: expected N x 2 projection with parallel labels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_scatter_csv: cannot open " + path);
  out << "x,y,label\n";
  char buf[64];
  for (std::size_t i = 0; i < projected.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", projected(i, 0));
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", projected(i, 1));
    out << buf << ',';
    const int l = labels[i];
    if (static_cast<std::size_t>(l) < label_names.size()) {
      out << label_names[l];
    } else {
      out << l;
    }
    out << '\n';
  }
}

}  // namespace constel
