#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "constel/losses.hpp"
#include "constel/numerics.hpp"
#include "test_util.hpp"

using namespace constel;

namespace {

std::vector<int> cyclic_labels(std::size_t n, int classes) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i) % classes;
  return labels;
}

}  // namespace

TEST_CASE("finite_diff_grad recovers known derivatives") {
  SeededRng rng(21);
  const Matrix x = test::random_matrix(3, 4, rng);

  const auto half_sq_norm = [](const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return 0.5 * s;
  };
  const Matrix g = finite_diff_grad(half_sq_norm, x);
  CHECK(test::max_abs_diff(g, x) < 1e-8);

  const Matrix zero = finite_diff_grad([](const Matrix&) { return 3.5; }, x);
  CHECK(zero.max_abs() == 0.0);
}

TEST_CASE("contrastive loss spot values") {
  SUBCASE("identical positive pair") {
    const Matrix x = Matrix::from_rows({{1, 2}, {1, 2}});
    const auto r = contrastive_loss({{0, 1, false}}, x, 1.0);
    CHECK(r.value == 0.0);
    CHECK(r.grad.max_abs() == 0.0);
  }
  SUBCASE("positive pair at distance 5") {
    const Matrix x = Matrix::from_rows({{0, 0}, {3, 4}});
    const auto r = contrastive_loss({{0, 1, false}}, x, 1.0);
    CHECK(r.value == doctest::Approx(12.5).epsilon(1e-12));
  }
  SUBCASE("negative pair inside the margin") {
    const Matrix x = Matrix::from_rows({{0, 0}, {0.5, 0}});
    const auto r = contrastive_loss({{0, 1, true}}, x, 1.0);
    CHECK(r.value == doctest::Approx(0.125).epsilon(1e-12));
  }
  SUBCASE("negative pair beyond the margin contributes nothing") {
    const Matrix x = Matrix::from_rows({{0, 0}, {5, 0}});
    const auto r = contrastive_loss({{0, 1, true}}, x, 1.0);
    CHECK(r.value == 0.0);
    CHECK(r.grad.max_abs() == 0.0);
  }
  SUBCASE("empty pair list is an error") {
    const Matrix x = Matrix::from_rows({{0, 0}});
    CHECK_THROWS_WITH_AS(contrastive_loss({}, x, 1.0), "contrastive_loss: no pairs",
                         std::invalid_argument);
  }
}

TEST_CASE("contrastive gradient matches finite differences") {
  SeededRng rng(22);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix x = test::random_matrix(6, 4, rng);
    const auto labels = cyclic_labels(6, 3);
    std::vector<ContrastivePair> pairs;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        const bool neg = labels[i] != labels[j];
        if (neg) {
          const double d = std::sqrt(squared_distance(x.row(i), x.row(j)));
          if (std::abs(1.0 - d) < 1e-3 || d < 1e-3) continue;  // hinge band
        }
        pairs.push_back({i, j, neg});
      }
    }
    REQUIRE(!pairs.empty());
    const auto analytic = contrastive_loss(pairs, x, 1.0);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& probe) { return contrastive_loss(pairs, probe, 1.0).value; },
        x);
    CHECK(test::grad_rel_err(analytic.grad, numeric) < 1e-6);
  }
}

TEST_CASE("triplet loss spot values") {
  SUBCASE("anchor equals positive, far negative: zero loss") {
    const Matrix x = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}});
    const auto r = triplet_loss({{{0, 1, 2}}}, x, 0.2);
    CHECK(r.value == 0.0);
  }
  SUBCASE("inactive hinge is exactly zero") {
    const Matrix x = Matrix::from_rows({{0, 0}, {1, 0}, {2, 0}});
    const auto r = triplet_loss({{{0, 1, 2}}}, x, 0.2);
    CHECK(r.value == 0.0);
    CHECK(r.grad.max_abs() == 0.0);
  }
  SUBCASE("active triplet value") {
    const Matrix x = Matrix::from_rows({{0, 0}, {0, 1}, {0.5, 0.5}});
    const auto r = triplet_loss({{{0, 1, 2}}}, x, 0.2);
    CHECK(r.value == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("empty triplet set is an error") {
    const Matrix x = Matrix::from_rows({{0, 0}});
    CHECK_THROWS_WITH_AS(triplet_loss({}, x, 0.2), "triplet_loss: no triplets",
                         std::invalid_argument);
  }
}

TEST_CASE("triplet gradient matches finite differences away from the hinge") {
  SeededRng rng(23);
  const double alpha = 0.2;
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix x = test::random_matrix(8, 3, rng);
    const Matrix d2 = pairwise_sq_dists(x);
    const auto labels = cyclic_labels(8, 4);
    TripletIndexSet set;
    for (std::size_t a = 0; a < 8; ++a) {
      for (std::size_t p = 0; p < 8; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        for (std::size_t n = 0; n < 8; ++n) {
          if (labels[n] == labels[a]) continue;
          if (std::abs(d2(a, p) - d2(a, n) + alpha) > 1e-3) {
            set.entries.push_back({a, p, n});
          }
        }
      }
    }
    REQUIRE(!set.entries.empty());
    const auto analytic = triplet_loss(set, x, alpha);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& probe) { return triplet_loss(set, probe, alpha).value; },
        x);
    CHECK(test::grad_rel_err(analytic.grad, numeric) < 1e-6);
  }
}

TEST_CASE("npair loss equal-similarity case gives log 2") {
  const Matrix a = Matrix::from_rows({{1, 0}, {1, 0}});
  const Matrix p = Matrix::from_rows({{1, 0}, {1, 0}});
  const auto r = npair_loss(a, p);
  CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.grad.rows() == 4);
}

TEST_CASE("npair loss decreases as the self-similarity grows") {
  // orthogonal anchors, positives scaled along them: the cross terms stay 0
  double prev = 1e300;
  for (double c : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const Matrix a = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const Matrix p = Matrix::from_rows({{c, 0, 0}, {0, c, 0}, {0, 0, c}});
    const double v = npair_loss(a, p).value;
    CHECK(v < prev);
    CHECK(v > 0.0);
    prev = v;
  }
}

TEST_CASE("npair gradient matches finite differences on the stacked arrays") {
  SeededRng rng(24);
  const std::size_t n = 4, dim = 8;
  const auto eval_stacked = [n, dim](const Matrix& stacked) {
    Matrix a(n, dim), p(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(stacked.row(i).begin(), stacked.row(i).end(), a.row(i).begin());
      std::copy(stacked.row(n + i).begin(), stacked.row(n + i).end(), p.row(i).begin());
    }
    return npair_loss(a, p);
  };
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix stacked = test::random_matrix(2 * n, dim, rng);
    const auto analytic = eval_stacked(stacked);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& probe) { return eval_stacked(probe).value; }, stacked);
    CHECK(test::grad_rel_err(analytic.grad, numeric) < 1e-6);
  }
}

TEST_CASE("npair rejects mismatched shapes and tiny batches") {
  const Matrix one = Matrix::from_rows({{1, 0}});
  CHECK_THROWS_WITH_AS(npair_loss(one, one), "npair_loss: need >=2 classes",
                       std::invalid_argument);
  const Matrix two = Matrix::from_rows({{1, 0}, {0, 1}});
  CHECK_THROWS_AS(npair_loss(two, one), std::invalid_argument);
}

TEST_CASE("constellation loss with equal dot products gives log(1+K)") {
  Matrix x(5, 3);
  for (std::size_t i = 0; i < 5; ++i) x(i, 0) = 1.0;  // identical rows
  ConstellationBatch batch;
  batch.entries.push_back({0, 1, {2, 3, 4}});
  const auto r = constellation_loss(batch, x, 3);
  CHECK(r.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("constellation K=1 is the softplus of the dot-product gap") {
  const Matrix x = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}});
  ConstellationBatch batch;
  batch.entries.push_back({0, 1, {2}});
  const auto r = constellation_loss(batch, x, 1);
  // a.n - a.p = 0 - 1 = -1
  CHECK(r.value == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.313262).epsilon(1e-6));
}

TEST_CASE("constellation K=1 equals a hand-rolled softplus on random batches") {
  SeededRng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = test::random_matrix(6, 4, rng);
    ConstellationBatch batch;
    batch.entries.push_back({0, 1, {2}});
    batch.entries.push_back({3, 4, {5}});
    const auto r = constellation_loss(batch, x, 1);
    double expected = 0.0;
    for (const auto& e : batch.entries) {
      const double gap = dot(x.row(e.anchor), x.row(e.negatives[0])) -
                         dot(x.row(e.anchor), x.row(e.positive));
      expected += gap > 0.0 ? gap + std::log1p(std::exp(-gap))
                            : std::log1p(std::exp(gap));
    }
    expected /= 2.0;
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("constellation value strictly decreases in the anchor-positive dot product") {
  // scalar-formula evaluation in dot-product space
  const auto value = [](double ap, const std::vector<double>& an) {
    std::vector<double> z;
    for (double v : an) z.push_back(v - ap);
    return log1p_sum_exp(z);
  };
  const std::vector<double> an = {0.3, -0.2, 0.7};
  double prev = 1e300;
  for (double ap : {-1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) {
    const double v = value(ap, an);
    CHECK(v < prev);
    CHECK(v > 0.0);
    prev = v;
  }
}

TEST_CASE("constellation gradient matches finite differences") {
  SeededRng rng(26);
  const int k = 4;
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix x = test::random_matrix(12, 8, rng);
    ConstellationBatch batch;
    for (std::size_t e = 0; e < 6; ++e) {
      ConstellationEntry entry;
      entry.anchor = rng.uniform_index(12);
      entry.positive = (entry.anchor + 1 + rng.uniform_index(11)) % 12;
      for (int j = 0; j < k; ++j) entry.negatives.push_back(rng.uniform_index(12));
      batch.entries.push_back(std::move(entry));
    }
    const auto analytic = constellation_loss(batch, x, k);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& probe) { return constellation_loss(batch, probe, k).value; },
        x);
    CHECK(test::grad_rel_err(analytic.grad, numeric) < 1e-6);
  }
}

TEST_CASE("constellation rejects malformed K-plets") {
  const Matrix x = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  ConstellationBatch batch;
  batch.entries.push_back({0, 1, {2, 2}});
  CHECK_THROWS_AS(constellation_loss(batch, x, 3), std::invalid_argument);
}

TEST_CASE("losses are invariant to tuple order") {
  SeededRng rng(27);
  const Matrix x = test::random_matrix(9, 5, rng);
  const auto labels = cyclic_labels(9, 3);

  TripletIndexSet triplets;
  for (std::size_t a = 0; a < 9; ++a) {
    for (std::size_t p = 0; p < 9; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t n = 0; n < 9; ++n) {
        if (labels[n] != labels[a]) triplets.entries.push_back({a, p, n});
      }
    }
  }
  const auto forward = triplet_loss(triplets, x, 0.2);
  TripletIndexSet reversed;
  reversed.entries.assign(triplets.entries.rbegin(), triplets.entries.rend());
  const auto backward = triplet_loss(reversed, x, 0.2);
  CHECK(std::abs(forward.value - backward.value) <= 1e-12);
  CHECK(test::max_abs_diff(forward.grad, backward.grad) <= 1e-12);
}

TEST_CASE("gradient rows of untouched embeddings stay exactly zero") {
  SeededRng rng(28);
  const Matrix x = test::random_matrix(10, 4, rng);
  const auto r = triplet_loss({{{0, 1, 2}}}, x, 5.0);  // big alpha keeps it active
  CHECK(r.value > 0.0);
  for (std::size_t i = 3; i < 10; ++i) {
    for (std::size_t d = 0; d < 4; ++d) CHECK(r.grad(i, d) == 0.0);
  }
}

TEST_CASE("loss values are never negative") {
  SeededRng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = test::random_matrix(8, 3, rng, -2.0, 2.0);
    const auto labels = cyclic_labels(8, 4);
    std::vector<ContrastivePair> pairs;
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = i + 1; j < 8; ++j) {
        pairs.push_back({i, j, labels[i] != labels[j]});
      }
    }
    CHECK(contrastive_loss(pairs, x, 1.0).value >= 0.0);

    ConstellationBatch batch;
    batch.entries.push_back({0, 4, {1, 2}});
    CHECK(constellation_loss(batch, x, 2).value > 0.0);

    Matrix a(4, 3), p(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
      std::copy(x.row(i).begin(), x.row(i).end(), a.row(i).begin());
      std::copy(x.row(4 + i).begin(), x.row(4 + i).end(), p.row(i).begin());
    }
    CHECK(npair_loss(a, p).value > 0.0);
  }
}
