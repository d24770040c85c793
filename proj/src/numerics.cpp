#include "constel/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace constel {

Matrix gram_matrix(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n == 0 || x.cols() == 0) {
    throw std::invalid_argument("gram_matrix: empty input");
  }
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = x.row(i);
    for (std::size_t j = i; j < n; ++j) {
      const double v = dot(ri, x.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Matrix pairwise_sq_dists(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n == 0) {
    throw std::invalid_argument("pairwise_sq_dists: empty input");
  }
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max(0.0, squared_distance(ri, x.row(j)));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

double log1p_sum_exp(std::span<const double> z) {
  if (z.empty()) return 0.0;
  double m = 0.0;  // the implicit exp(0) term
  for (double v : z) m = std::max(m, v);
  double s = std::exp(-m);
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

RowNormalizeResult l2_normalize_rows(const Matrix& x) {
  RowNormalizeResult out{Matrix(x.rows(), x.cols()),
                         std::vector<bool>(x.rows(), false)};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto src = x.row(i);
    const double norm = std::sqrt(dot(src, src));
    double denom = norm;
    if (norm < kNormFloor) {
      denom = kNormFloor;
      out.floored[i] = true;
    }
    auto dst = out.rows.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / denom;
  }
  return out;
}

}  // namespace constel
