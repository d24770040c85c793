#pragma once

#include <functional>
#include <string>
#include <vector>

#include "constel/losses.hpp"
#include "constel/matrix.hpp"
#include "constel/rng.hpp"

namespace constel {

/**
 * Feedforward embedding network: ReLU hidden layers, sigmoid embedding
 * layer, optional L2 row normalization of the output. Weight matrices are
 * (fan_out x fan_in); layer l maps activations a_{l-1} to
 * act(a_{l-1} W_l^T + b_l).
 */
struct MlpEmbedder {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., embedding
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  bool normalize_output = true;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t embedding_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
};

/// Per-parameter Adam accumulators plus the step counter.
struct AdamState {
  std::vector<Matrix> m_weights, v_weights;
  std::vector<std::vector<double>> m_biases, v_biases;
  long t = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Everything forward_batch needs to keep for backprop.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;     // a_0 .. a_{L-1}
  std::vector<Matrix> pre_activations;  // z_1 .. z_L
  Matrix sigmoid_out;                   // embedding layer output, pre-normalization
  std::vector<double> row_norms;        // only filled when normalizing
};

struct ParamGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

/**
 * Fan-in-scaled uniform initialization: each weight drawn from
 * U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero. Deterministic per rng
 * state; weights are drawn layer by layer in row-major order.
 */
MlpEmbedder init_embedder(const std::vector<std::size_t>& layer_sizes,
                          bool normalize_output, SeededRng& rng);

AdamState make_adam_state(const MlpEmbedder& model, double learning_rate = 1e-3);

/// Batched forward pass; input width must equal the first layer size.
std::pair<Matrix, ForwardCache> forward_batch(const MlpEmbedder& model,
                                              const Matrix& inputs);

/// Embeddings only, no cache kept.
Matrix embed(const MlpEmbedder& model, const Matrix& inputs);

/// Backpropagate a loss gradient (w.r.t. the network output) to parameter
/// space, including the normalization Jacobian when enabled.
ParamGrads backprop(const MlpEmbedder& model, const ForwardCache& cache,
                    const Matrix& output_grad);

/// Maps a batch of embeddings to a loss value and gradient; closes over
/// labels/batch structure.
using LossAdapter = std::function<LossResult(const Matrix& embeddings)>;

/**
 * One optimization step: forward, loss, backprop, bias-corrected Adam
 * update. Returns the loss value. Throws (naming the layer) if the loss or
 * any gradient is non-finite.
 */
double train_step(MlpEmbedder& model, AdamState& state, const Matrix& inputs,
                  const LossAdapter& loss_adapter);

/// Versioned JSON checkpoint; doubles stored at full precision.
void save_model(const MlpEmbedder& model, const std::string& path);
MlpEmbedder load_model(const std::string& path);

}  // namespace constel
