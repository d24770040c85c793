#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "constel/model.hpp"
#include "constel/numerics.hpp"
#include "test_util.hpp"

using namespace constel;

namespace {

std::vector<double> flatten(const MlpEmbedder& m) {
  std::vector<double> out;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    out.insert(out.end(), m.weights[l].data().begin(), m.weights[l].data().end());
    out.insert(out.end(), m.biases[l].begin(), m.biases[l].end());
  }
  return out;
}

void unflatten(MlpEmbedder& m, const std::vector<double>& flat) {
  std::size_t pos = 0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (double& v : m.weights[l].data()) v = flat[pos++];
    for (double& v : m.biases[l]) v = flat[pos++];
  }
}

}  // namespace

TEST_CASE("initialization is deterministic and respects the fan-in bound") {
  SeededRng a(7), b(7);
  const auto one = init_embedder({4, 8, 2}, true, a);
  const auto two = init_embedder({4, 8, 2}, true, b);
  CHECK(flatten(one) == flatten(two));

  for (std::size_t l = 0; l < one.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(one.layer_sizes[l]));
    CHECK(one.weights[l].max_abs() <= bound);
    for (double v : one.biases[l]) CHECK(v == 0.0);
  }
}

TEST_CASE("initialization rejects degenerate layer lists") {
  SeededRng rng(1);
  CHECK_THROWS_AS(init_embedder({4}, true, rng), std::invalid_argument);
  CHECK_THROWS_AS(init_embedder({4, 0, 2}, true, rng), std::invalid_argument);
}

TEST_CASE("forward of a zero input is sigmoid(0) per unit, normalized to 1/sqrt(E)") {
  SeededRng rng(8);
  const auto model = init_embedder({3, 5, 4}, true, rng);
  const Matrix zero(1, 3);
  const auto [emb, cache] = forward_batch(model, zero);
  const double expected = 1.0 / std::sqrt(4.0);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(emb(0, j) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cache.sigmoid_out(0, j) == 0.5);
  }
}

TEST_CASE("forward matches manual arithmetic on a 2-2-2 net") {
  MlpEmbedder model;
  model.layer_sizes = {2, 2, 2};
  model.normalize_output = false;
  model.weights.push_back(Matrix::from_rows({{1.0, -1.0}, {0.5, 0.25}}));
  model.biases.push_back({0.1, -0.2});
  model.weights.push_back(Matrix::from_rows({{2.0, 1.0}, {-1.0, 3.0}}));
  model.biases.push_back({0.0, 0.5});

  const Matrix x = Matrix::from_rows({{0.3, 0.7}});
  const auto [emb, cache] = forward_batch(model, x);

  const double z10 = 1.0 * 0.3 - 1.0 * 0.7 + 0.1;
  const double z11 = 0.5 * 0.3 + 0.25 * 0.7 - 0.2;
  const double a10 = std::max(0.0, z10);
  const double a11 = std::max(0.0, z11);
  const double z20 = 2.0 * a10 + 1.0 * a11;
  const double z21 = -1.0 * a10 + 3.0 * a11 + 0.5;
  CHECK(emb(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-z20))).epsilon(1e-12));
  CHECK(emb(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-z21))).epsilon(1e-12));
}

TEST_CASE("normalized output rows have unit norm; identical inputs embed identically") {
  SeededRng rng(9);
  const auto model = init_embedder({6, 10, 8}, true, rng);
  Matrix inputs = test::random_matrix(4, 6, rng);
  // duplicate row 0 into row 3
  for (std::size_t d = 0; d < 6; ++d) inputs(3, d) = inputs(0, d);

  const Matrix emb = embed(model, inputs);
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    CHECK(std::abs(std::sqrt(dot(emb.row(i), emb.row(i))) - 1.0) < 1e-12);
  }
  for (std::size_t d = 0; d < 8; ++d) CHECK(emb(0, d) == emb(3, d));

  CHECK_THROWS_AS(embed(model, Matrix(2, 5)), std::invalid_argument);
}

TEST_CASE("unnormalized sigmoid outputs stay inside (0,1)") {
  SeededRng rng(10);
  const auto model = init_embedder({4, 6, 3}, false, rng);
  const Matrix emb = embed(model, test::random_matrix(10, 4, rng, -3.0, 3.0));
  for (double v : emb.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("zero loss gradient leaves parameters untouched but ticks the step") {
  SeededRng rng(11);
  auto model = init_embedder({3, 4, 2}, true, rng);
  auto adam = make_adam_state(model);
  const auto before = flatten(model);
  const Matrix inputs = test::random_matrix(5, 3, rng);
  const double value = train_step(model, adam, inputs, [](const Matrix& emb) {
    return LossResult{0.0, Matrix(emb.rows(), emb.cols())};
  });
  CHECK(value == 0.0);
  CHECK(adam.t == 1);
  CHECK(flatten(model) == before);
}

TEST_CASE("first Adam step follows the closed-form bias-corrected update") {
  SeededRng rng(12);
  auto model = init_embedder({2, 3, 2}, true, rng);
  auto adam = make_adam_state(model, 1e-3);
  const Matrix inputs = test::random_matrix(4, 2, rng);

  // random linear loss: constant gradient w.r.t. the embeddings
  const Matrix direction = test::random_matrix(4, 2, rng);
  const LossAdapter adapter = [&](const Matrix& emb) {
    double v = 0.0;
    for (std::size_t i = 0; i < emb.data().size(); ++i) {
      v += emb.data()[i] * direction.data()[i];
    }
    return LossResult{std::abs(v), direction};
  };

  // the same parameter gradient train_step will see
  const auto [emb, cache] = forward_batch(model, inputs);
  const ParamGrads grads = backprop(model, cache, direction);
  std::vector<double> g;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    g.insert(g.end(), grads.weights[l].data().begin(), grads.weights[l].data().end());
    g.insert(g.end(), grads.biases[l].begin(), grads.biases[l].end());
  }

  const auto before = flatten(model);
  train_step(model, adam, inputs, adapter);
  const auto after = flatten(model);
  REQUIRE(adam.t == 1);
  for (std::size_t p = 0; p < g.size(); ++p) {
    // step 1: m_hat = g, v_hat = g^2 exactly
    const double expected = -1e-3 * g[p] / (std::abs(g[p]) + adam.epsilon);
    CHECK(after[p] - before[p] == doctest::Approx(expected).epsilon(1e-12));
    if (std::abs(g[p]) > 1e-6) {
      CHECK(after[p] - before[p] ==
            doctest::Approx(-1e-3 * (g[p] > 0 ? 1.0 : -1.0)).epsilon(1e-3));
    }
  }
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
  // 2-3-2 net, smooth quadratic loss on the embeddings; normalization on is
  // the regression-prone path
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed);
    for (bool normalize : {true, false}) {
      auto model = init_embedder({2, 3, 2}, normalize, rng);
      const Matrix inputs = test::random_matrix(5, 2, rng, -2.0, 2.0);
      const Matrix target = test::random_matrix(5, 2, rng);

      const auto loss_of = [&](const Matrix& emb) {
        double v = 0.0;
        Matrix grad(emb.rows(), emb.cols());
        for (std::size_t i = 0; i < emb.data().size(); ++i) {
          const double diff = emb.data()[i] - target.data()[i];
          v += diff * diff;
          grad.data()[i] = 2.0 * diff;
        }
        return LossResult{v, std::move(grad)};
      };

      const auto [emb, cache] = forward_batch(model, inputs);
      const ParamGrads analytic = backprop(model, cache, loss_of(emb).grad);
      std::vector<double> analytic_flat;
      for (std::size_t l = 0; l < analytic.weights.size(); ++l) {
        analytic_flat.insert(analytic_flat.end(), analytic.weights[l].data().begin(),
                             analytic.weights[l].data().end());
        analytic_flat.insert(analytic_flat.end(), analytic.biases[l].begin(),
                             analytic.biases[l].end());
      }

      std::vector<double> theta = flatten(model);
      double max_err = 0.0;
      double scale = 1e-8;
      const double h = 1e-5;
      for (std::size_t p = 0; p < theta.size(); ++p) {
        const double orig = theta[p];
        theta[p] = orig + h;
        unflatten(model, theta);
        const double up = loss_of(embed(model, inputs)).value;
        theta[p] = orig - h;
        unflatten(model, theta);
        const double down = loss_of(embed(model, inputs)).value;
        theta[p] = orig;
        const double numeric = (up - down) / (2.0 * h);
        max_err = std::max(max_err, std::abs(numeric - analytic_flat[p]));
        scale = std::max({scale, std::abs(numeric), std::abs(analytic_flat[p])});
      }
      unflatten(model, theta);
      CHECK(max_err / scale < 1e-5);
    }
  }
}

TEST_CASE("training rejects non-finite losses with a diagnostic") {
  SeededRng rng(13);
  auto model = init_embedder({2, 3, 2}, true, rng);
  auto adam = make_adam_state(model);
  const Matrix inputs = test::random_matrix(3, 2, rng);
  CHECK_THROWS_AS(train_step(model, adam, inputs,
                             [](const Matrix& emb) {
                               return LossResult{std::nan(""),
                                                 Matrix(emb.rows(), emb.cols())};
                             }),
                  std::runtime_error);
}

TEST_CASE("checkpoint round trip preserves every parameter bit-for-bit") {
  SeededRng rng(14);
  const auto model = init_embedder({5, 7, 3}, false, rng);
  const std::string path = "model_roundtrip_test.json";
  save_model(model, path);
  const auto loaded = load_model(path);
  std::remove(path.c_str());

  CHECK(loaded.layer_sizes == model.layer_sizes);
  CHECK(loaded.normalize_output == model.normalize_output);
  CHECK(flatten(loaded) == flatten(model));

  const Matrix inputs = test::random_matrix(4, 5, rng);
  CHECK(embed(loaded, inputs) == embed(model, inputs));
}
