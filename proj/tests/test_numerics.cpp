#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "constel/numerics.hpp"
#include "test_util.hpp"

using namespace constel;

TEST_CASE("gram matrix of orthonormal rows is the identity") {
  const Matrix x = Matrix::from_rows({{1, 0}, {0, 1}});
  const Matrix g = gram_matrix(x);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == 0.0);
  CHECK(g(1, 1) == 1.0);
}

TEST_CASE("gram matrix of a single row is its squared norm") {
  const Matrix g = gram_matrix(Matrix::from_rows({{2, 0}}));
  CHECK(g.rows() == 1);
  CHECK(g(0, 0) == 4.0);
}

TEST_CASE("gram matrix matches the scalar-loop oracle") {
  SeededRng rng(11);
  const Matrix x = test::random_matrix(5, 3, rng);
  const Matrix g = gram_matrix(x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double expected = 0.0;
      for (std::size_t d = 0; d < 3; ++d) expected += x(i, d) * x(j, d);
      CHECK(g(i, j) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(g(i, j) == g(j, i));
    }
  }
}

TEST_CASE("pairwise squared distances: 3-4-5 triangle") {
  const Matrix d = pairwise_sq_dists(Matrix::from_rows({{0, 0}, {3, 4}}));
  CHECK(d(0, 1) == 25.0);
  CHECK(d(1, 0) == 25.0);
  CHECK(d(0, 0) == 0.0);
  CHECK(d(1, 1) == 0.0);
}

TEST_CASE("pairwise squared distances match the subtraction oracle") {
  SeededRng rng(12);
  const Matrix x = test::random_matrix(6, 4, rng);
  const Matrix d = pairwise_sq_dists(x);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < 6; ++j) {
      double expected = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double t = x(i, k) - x(j, k);
        expected += t * t;
      }
      CHECK(std::abs(d(i, j) - expected) < 1e-10);
      CHECK(d(i, j) >= 0.0);
    }
  }
}

TEST_CASE("distance identity d2 = g(i,i) + g(j,j) - 2 g(i,j)") {
  SeededRng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = test::random_matrix(7, 5, rng, -3.0, 3.0);
    const Matrix g = gram_matrix(x);
    const Matrix d = pairwise_sq_dists(x);
    for (std::size_t i = 0; i < 7; ++i) {
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(std::abs(d(i, j) - (g(i, i) + g(j, j) - 2.0 * g(i, j))) < 1e-9);
      }
    }
  }
}

TEST_CASE("log1p_sum_exp basics") {
  const double z0[] = {0.0};
  CHECK(log1p_sum_exp(z0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const double big[] = {1000.0};
  const double v = log1p_sum_exp(big);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(1000.0).epsilon(1e-12));

  CHECK(log1p_sum_exp({}) == 0.0);
}

TEST_CASE("log1p_sum_exp agrees with the naive formula at small magnitudes") {
  const double z[] = {-1.0, -2.0, -3.0};
  const double naive =
      std::log(1.0 + std::exp(-1.0) + std::exp(-2.0) + std::exp(-3.0));
  CHECK(std::abs(log1p_sum_exp(z) - naive) < 1e-12);
}

TEST_CASE("log1p_sum_exp lower bound and monotonicity") {
  SeededRng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(1 + rng.uniform_index(6));
    for (double& v : z) v = rng.uniform_double(-1e3, 1e3);
    const double base = log1p_sum_exp(z);
    double zmax = 0.0;
    for (double v : z) zmax = std::max(zmax, v);
    CHECK(base >= zmax);

    const std::size_t bump = rng.uniform_index(z.size());
    z[bump] += 0.5;
    CHECK(log1p_sum_exp(z) >= base);
  }
}

TEST_CASE("l2_normalize_rows on known rows") {
  const auto r = l2_normalize_rows(Matrix::from_rows({{3, 4}, {1, 0}}));
  CHECK(r.rows(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(r.rows(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.rows(1, 0) == 1.0);
  CHECK(r.rows(1, 1) == 0.0);
  CHECK_FALSE(r.floored[0]);
  CHECK_FALSE(r.floored[1]);
}

TEST_CASE("l2_normalize_rows produces unit norms and is idempotent") {
  SeededRng rng(15);
  const Matrix x = test::random_matrix(4, 5, rng, -2.0, 2.0);
  const auto once = l2_normalize_rows(x);
  for (std::size_t i = 0; i < 4; ++i) {
    const double norm = std::sqrt(dot(once.rows.row(i), once.rows.row(i)));
    CHECK(std::abs(norm - 1.0) < 1e-12);
  }
  const auto twice = l2_normalize_rows(once.rows);
  CHECK(test::max_abs_diff(once.rows, twice.rows) < 1e-12);
}

TEST_CASE("l2_normalize_rows floors zero rows instead of dividing by zero") {
  Matrix x(2, 3);
  x(1, 0) = 5.0;
  const auto r = l2_normalize_rows(x);
  CHECK(r.floored[0]);
  CHECK_FALSE(r.floored[1]);
  CHECK(r.rows(0, 0) == 0.0);
  CHECK(r.rows(1, 0) == 1.0);
  CHECK(r.rows.all_finite());
}

TEST_CASE("matrix construction rejects non-finite data and bad sizes") {
  CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), std::invalid_argument);
}
