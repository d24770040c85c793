#include "constel/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "constel/numerics.hpp"

namespace constel {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// out = a * W^T + b, row per sample
Matrix affine(const Matrix& a, const Matrix& w, const std::vector<double>& b) {
  Matrix out(a.rows(), w.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    auto oi = out.row(i);
    for (std::size_t j = 0; j < w.rows(); ++j) {
      oi[j] = dot(ai, w.row(j)) + b[j];
    }
  }
  return out;
}

}  // namespace

MlpEmbedder init_embedder(const std::vector<std::size_t>& layer_sizes,
                          bool normalize_output, SeededRng& rng) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("init_embedder: need at least input and embedding sizes");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw std::invalid_argument("init_embedder: zero layer size");
  }
  MlpEmbedder model;
  model.layer_sizes = layer_sizes;
  model.normalize_output = normalize_output;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l - 1];
    const std::size_t fan_out = layer_sizes[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform_double(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(fan_out, 0.0);
  }
  return model;
}

AdamState make_adam_state(const MlpEmbedder& model, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    s.m_weights.emplace_back(model.weights[l].rows(), model.weights[l].cols());
    s.v_weights.emplace_back(model.weights[l].rows(), model.weights[l].cols());
    s.m_biases.emplace_back(model.biases[l].size(), 0.0);
    s.v_biases.emplace_back(model.biases[l].size(), 0.0);
  }
  return s;
}

std::pair<Matrix, ForwardCache> forward_batch(const MlpEmbedder& model,
                                              const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) {
    throw std::invalid_argument("forward_batch: input width " +
                                std::to_string(inputs.cols()) +
                                " does not match first layer size " +
                                std::to_string(model.input_dim()));
  }
  ForwardCache cache;
  Matrix a = inputs;
  const std::size_t layers = model.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    cache.layer_inputs.push_back(a);
    Matrix z = affine(a, model.weights[l], model.biases[l]);
    cache.pre_activations.push_back(z);
    if (l + 1 < layers) {
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;  // ReLU
    } else {
      for (double& v : z.data()) v = sigmoid(v);
    }
    a = std::move(z);
  }
  cache.sigmoid_out = a;

  if (!model.normalize_output) {
    return {std::move(a), std::move(cache)};
  }
  cache.row_norms.resize(a.rows());
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto src = a.row(i);
    double norm = std::sqrt(dot(src, src));
    if (norm < kNormFloor) norm = kNormFloor;
    cache.row_norms[i] = norm;
    auto dst = out.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / norm;
  }
  return {std::move(out), std::move(cache)};
}

Matrix embed(const MlpEmbedder& model, const Matrix& inputs) {
  return forward_batch(model, inputs).first;
}

ParamGrads backprop(const MlpEmbedder& model, const ForwardCache& cache,
                    const Matrix& output_grad) {
  const std::size_t layers = model.num_layers();
  Matrix delta = output_grad;  // becomes dL/dz layer by layer

  if (model.normalize_output) {
    // y = x / ||x||: dL/dx = (g - y (y.g)) / ||x||. When the norm was
    // floored the denominator is a constant, so dL/dx = g / floor.
    const Matrix& x = cache.sigmoid_out;
    Matrix dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double norm = cache.row_norms[i];
      const auto xi = x.row(i);
      const auto gi = delta.row(i);
      auto di = dx.row(i);
      if (norm <= kNormFloor) {
        for (std::size_t j = 0; j < xi.size(); ++j) di[j] = gi[j] / norm;
        continue;
      }
      double y_dot_g = 0.0;
      for (std::size_t j = 0; j < xi.size(); ++j) {
        y_dot_g += (xi[j] / norm) * gi[j];
      }
      for (std::size_t j = 0; j < xi.size(); ++j) {
        di[j] = (gi[j] - (xi[j] / norm) * y_dot_g) / norm;
      }
    }
    delta = std::move(dx);
  }

  ParamGrads grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& z = cache.pre_activations[l];
    if (l + 1 == layers) {
      // sigmoid' = s (1 - s); sigmoid_out already holds s
      const Matrix& s = cache.sigmoid_out;
      for (std::size_t idx = 0; idx < delta.data().size(); ++idx) {
        const double sv = s.data()[idx];
        delta.data()[idx] *= sv * (1.0 - sv);
      }
    } else {
      for (std::size_t idx = 0; idx < delta.data().size(); ++idx) {
        if (z.data()[idx] <= 0.0) delta.data()[idx] = 0.0;
      }
    }

    const Matrix& a_prev = cache.layer_inputs[l];
    Matrix dw(model.weights[l].rows(), model.weights[l].cols());
    std::vector<double> db(model.biases[l].size(), 0.0);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      const auto di = delta.row(i);
      const auto ai = a_prev.row(i);
      for (std::size_t j = 0; j < dw.rows(); ++j) {
        const double dij = di[j];
        if (dij == 0.0) continue;
        auto wj = dw.row(j);
        for (std::size_t d = 0; d < ai.size(); ++d) wj[d] += dij * ai[d];
        db[j] += dij;
      }
    }

    if (l > 0) {
      // dL/da_{l-1} = delta W_l
      Matrix next(delta.rows(), model.weights[l].cols());
      for (std::size_t i = 0; i < delta.rows(); ++i) {
        const auto di = delta.row(i);
        auto ni = next.row(i);
        for (std::size_t j = 0; j < model.weights[l].rows(); ++j) {
          const double dij = di[j];
          if (dij == 0.0) continue;
          const auto wj = model.weights[l].row(j);
          for (std::size_t d = 0; d < ni.size(); ++d) ni[d] += dij * wj[d];
        }
      }
      delta = std::move(next);
    }
    grads.weights[l] = std::move(dw);
    grads.biases[l] = std::move(db);
  }
  return grads;
}

namespace {

void adam_update(std::vector<double>& param, std::vector<double>& m,
                 std::vector<double>& v, const std::vector<double>& grad,
                 const AdamState& s, double bias1, double bias2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

double train_step(MlpEmbedder& model, AdamState& state, const Matrix& inputs,
                  const LossAdapter& loss_adapter) {
  auto [embeddings, cache] = forward_batch(model, inputs);
  LossResult loss = loss_adapter(embeddings);
  if (!std::isfinite(loss.value)) {
    throw std::runtime_error("train_step: non-finite loss value");
  }
  if (!loss.grad.all_finite()) {
    throw std::runtime_error("train_step: non-finite loss gradient");
  }
  ParamGrads grads = backprop(model, cache, loss.grad);
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    if (!grads.weights[l].all_finite()) {
      throw std::runtime_error("train_step: non-finite gradient in layer " +
                               std::to_string(l));
    }
  }

  state.t += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    adam_update(model.weights[l].data(), state.m_weights[l].data(),
                state.v_weights[l].data(), grads.weights[l].data(), state,
                bias1, bias2);
    adam_update(model.biases[l], state.m_biases[l], state.v_biases[l],
                grads.biases[l], state, bias1, bias2);
  }
  return loss.value;
}

void save_model(const MlpEmbedder& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "constel-model-v1";
  j["layer_sizes"] = model.layer_sizes;
  j["normalize_output"] = model.normalize_output;
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    j["weights"].push_back(model.weights[l].data());
    j["biases"].push_back(model.biases[l]);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << j.dump(2) << '\n';
}

MlpEmbedder load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "constel-model-v1") {
    throw std::runtime_error("load_model: unrecognized checkpoint format");
  }
  MlpEmbedder model;
  model.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  model.normalize_output = j.at("normalize_output").get<bool>();
  for (std::size_t l = 1; l < model.layer_sizes.size(); ++l) {
    const std::size_t rows = model.layer_sizes[l];
    const std::size_t cols = model.layer_sizes[l - 1];
    auto wdata = j.at("weights").at(l - 1).get<std::vector<double>>();
    model.weights.emplace_back(rows, cols, std::move(wdata));
    model.biases.push_back(j.at("biases").at(l - 1).get<std::vector<double>>());
    if (model.biases.back().size() != rows) {
      throw std::runtime_error("load_model: bias length mismatch in layer " +
                               std::to_string(l - 1));
    }
  }
  return model;
}

}  // namespace constel
