#include "constel/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "constel/numerics.hpp"

namespace constel {

void LossHyper::validate() const {
  if (!(margin > 0.0)) throw std::invalid_argument("LossHyper: margin must be > 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("LossHyper: alpha must be >= 0");
  if (k_negatives < 1) throw std::invalid_argument("LossHyper: K must be >= 1");
}

namespace {

void check_index(std::size_t idx, std::size_t n, const char* what) {
  if (idx >= n) {
    throw std::invalid_argument(std::string(what) + " index " +
                                std::to_string(idx) + " out of range for " +
                                std::to_string(n) + " rows");
  }
}

// grad.row(i) += scale * (x.row(a) - x.row(b))
void add_scaled_diff(Matrix& grad, std::size_t i, const Matrix& x,
                     std::size_t a, std::size_t b, double scale) {
  auto g = grad.row(i);
  const auto ra = x.row(a);
  const auto rb = x.row(b);
  for (std::size_t d = 0; d < g.size(); ++d) g[d] += scale * (ra[d] - rb[d]);
}

// grad.row(i) += scale * x.row(a)
void add_scaled_row(Matrix& grad, std::size_t i, const Matrix& x,
                    std::size_t a, double scale) {
  auto g = grad.row(i);
  const auto ra = x.row(a);
  for (std::size_t d = 0; d < g.size(); ++d) g[d] += scale * ra[d];
}

}  // namespace

LossResult contrastive_loss(const std::vector<ContrastivePair>& pairs,
                            const Matrix& x, double margin) {
  if (pairs.empty()) throw std::invalid_argument("contrastive_loss: no pairs");
  if (!(margin > 0.0)) throw std::invalid_argument("contrastive_loss: margin must be > 0");

  LossResult out{0.0, Matrix(x.rows(), x.cols())};
  const double inv = 1.0 / (2.0 * static_cast<double>(pairs.size()));
  for (const auto& p : pairs) {
    check_index(p.i, x.rows(), "pair");
    check_index(p.j, x.rows(), "pair");
    const double d2 = squared_distance(x.row(p.i), x.row(p.j));
    if (!p.different_class) {
      out.value += inv * d2;
      // d(d^2)/dx_i = 2 (x_i - x_j)
      add_scaled_diff(out.grad, p.i, x, p.i, p.j, 2.0 * inv);
      add_scaled_diff(out.grad, p.j, x, p.j, p.i, 2.0 * inv);
    } else {
      const double d = std::sqrt(d2);
      if (d < margin) {
        const double slack = margin - d;
        out.value += inv * slack * slack;
        if (d > 0.0) {
          const double scale = -2.0 * inv * slack / d;
          add_scaled_diff(out.grad, p.i, x, p.i, p.j, scale);
          add_scaled_diff(out.grad, p.j, x, p.j, p.i, scale);
        }
        // d == 0: no direction to push apart; gradient defined as 0.
      }
    }
  }
  return out;
}

LossResult triplet_loss(const TripletIndexSet& triplets, const Matrix& x,
                        double alpha) {
  if (triplets.entries.empty()) {
    throw std::invalid_argument("triplet_loss: no triplets");
  }
  if (!(alpha >= 0.0)) throw std::invalid_argument("triplet_loss: alpha must be >= 0");

  LossResult out{0.0, Matrix(x.rows(), x.cols())};
  const double inv = 1.0 / static_cast<double>(triplets.entries.size());
  for (const auto& t : triplets.entries) {
    check_index(t.anchor, x.rows(), "triplet");
    check_index(t.positive, x.rows(), "triplet");
    check_index(t.negative, x.rows(), "triplet");
    const double d_ap = squared_distance(x.row(t.anchor), x.row(t.positive));
    const double d_an = squared_distance(x.row(t.anchor), x.row(t.negative));
    const double hinge = d_ap - d_an + alpha;
    if (hinge > 0.0) {
      out.value += inv * hinge;
      add_scaled_diff(out.grad, t.anchor, x, t.negative, t.positive, 2.0 * inv);
      add_scaled_diff(out.grad, t.positive, x, t.positive, t.anchor, 2.0 * inv);
      add_scaled_diff(out.grad, t.negative, x, t.anchor, t.negative, 2.0 * inv);
    }
  }
  return out;
}

LossResult npair_loss(const Matrix& anchors, const Matrix& positives) {
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
    throw std::invalid_argument("npair_loss: anchor and positive arrays differ in shape");
  }
  const std::size_t n = anchors.rows();
  const std::size_t dim = anchors.cols();
  if (n < 2) throw std::invalid_argument("npair_loss: need >=2 classes");

  LossResult out{0.0, Matrix(2 * n, dim)};
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<double> z(n - 1);
  std::vector<std::size_t> cols(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a_i = anchors.row(i);
    const double self = dot(a_i, positives.row(i));
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      z[m] = dot(a_i, positives.row(j)) - self;
      cols[m] = j;
      ++m;
    }
    const double lse = log1p_sum_exp(z);
    out.value += inv * lse;

    // softmax weights p_j = exp(z_j - lse); their sum never reaches 1
    // because of the implicit constant term.
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t j = cols[k];
      const double w = std::exp(z[k] - lse) * inv;
      weight_sum += w;
      // d z_j / d a_i = p_j - p_i ; d z_j / d p_j = a_i
      auto ga = out.grad.row(i);
      const auto pj = positives.row(j);
      const auto pi = positives.row(i);
      for (std::size_t d = 0; d < dim; ++d) ga[d] += w * (pj[d] - pi[d]);
      add_scaled_row(out.grad, n + j, anchors, i, w);
    }
    // d z_j / d p_i = -a_i for every j
    add_scaled_row(out.grad, n + i, anchors, i, -weight_sum);
  }
  return out;
}

LossResult constellation_loss(const ConstellationBatch& batch, const Matrix& x,
                              int k_negatives) {
  if (k_negatives < 1) {
    throw std::invalid_argument("constellation_loss: K must be >= 1");
  }
  if (batch.entries.empty()) {
    throw std::invalid_argument("constellation_loss: empty batch");
  }
  const std::size_t k = static_cast<std::size_t>(k_negatives);
  for (const auto& e : batch.entries) {
    if (e.negatives.size() != k) {
      throw std::invalid_argument(
          "constellation_loss: malformed K-plet (entry has " +
          std::to_string(e.negatives.size()) + " negatives, expected " +
          std::to_string(k) + ")");
    }
  }

  LossResult out{0.0, Matrix(x.rows(), x.cols())};
  const double inv = 1.0 / static_cast<double>(batch.entries.size());
  std::vector<double> z(k);
  for (const auto& e : batch.entries) {
    check_index(e.anchor, x.rows(), "K-plet");
    check_index(e.positive, x.rows(), "K-plet");
    const auto a = x.row(e.anchor);
    const double ap = dot(a, x.row(e.positive));
    for (std::size_t j = 0; j < k; ++j) {
      check_index(e.negatives[j], x.rows(), "K-plet");
      z[j] = dot(a, x.row(e.negatives[j])) - ap;
    }
    const double lse = log1p_sum_exp(z);
    out.value += inv * lse;

    double weight_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double w = std::exp(z[j] - lse) * inv;
      weight_sum += w;
      add_scaled_diff(out.grad, e.anchor, x, e.negatives[j], e.positive, w);
      add_scaled_row(out.grad, e.negatives[j], x, e.anchor, w);
    }
    add_scaled_row(out.grad, e.positive, x, e.anchor, -weight_sum);
  }
  return out;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_eval,
                        const Matrix& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = loss_eval(probe);
      probe(i, j) = orig - h;
      const double down = loss_eval(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace constel
