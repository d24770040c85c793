#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "constel/batching.hpp"
#include "constel/data.hpp"
#include "constel/eval.hpp"
#include "constel/losses.hpp"
#include "constel/model.hpp"

namespace constel {

enum class LossKind { kContrastive, kTriplet, kNpair, kConstellation };

std::string to_string(LossKind loss);
LossKind loss_from_string(const std::string& name);
std::string to_string(MiningMode mode);
MiningMode mining_from_string(const std::string& name);

/// Dataset source: a CSV path or synthetic generator parameters.
struct DatasetSpec {
  std::string csv_path;  // empty when synthetic
  bool synthetic = false;
  int classes = 8;
  int per_class = 80;
  int dim = 16;
  double sep = 4.0;
  double sigma = 1.5;

  bool operator==(const DatasetSpec&) const = default;

  static DatasetSpec synthetic_default() {
    DatasetSpec d;
    d.synthetic = true;
    return d;
  }
};

/**
 * Full experiment description. The output-normalization flag is derived, not
 * stored: it is false exactly when the loss is npair, which folds its own
 * normalization into the objective.
 */
struct ExperimentConfig {
  DatasetSpec dataset;
  std::optional<std::pair<std::size_t, std::size_t>> grid;
  LossKind loss = LossKind::kTriplet;
  LossHyper hyper;
  std::vector<std::size_t> hidden = {256, 128};
  std::size_t embedding_dim = 128;
  int epochs = 10;
  std::size_t batch_classes = 8;
  std::size_t batch_per_class = 4;
  double learning_rate = 1e-3;
  MiningMode mining = MiningMode::kSemiHard;
  int folds = 10;
  int knn_k = 5;
  std::uint64_t seed = 42;

  bool normalize_output() const { return loss != LossKind::kNpair; }
  std::vector<std::size_t> layer_sizes(std::size_t input_dim) const;
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

struct MetricSummary {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double davies_bouldin = 0.0;
  double silhouette = 0.0;

  bool operator==(const MetricSummary&) const = default;
};

/// Cross-validated experiment outcome: per-fold metrics, their mean and
/// sample (n-1) standard deviation, and per-epoch loss curves.
struct RunReport {
  ExperimentConfig config;
  std::vector<EvalReport> folds;
  MetricSummary mean;
  MetricSummary std_dev;
  std::vector<std::vector<double>> train_loss;  // [fold][epoch]
  std::vector<std::vector<double>> val_loss;    // [fold][epoch]
  double wall_clock_seconds = 0.0;

  bool operator==(const RunReport&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

/// Load or synthesize the dataset named by the config (seeded from
/// config.seed for the synthetic case) and apply the grid shape if any.
LabeledDataset resolve_dataset(const ExperimentConfig& cfg);

/// Fold partition for a config: a function of (dataset, folds, seed) only,
/// never of the loss, so every loss sees identical splits.
std::vector<FoldSplit> experiment_folds(const LabeledDataset& ds,
                                        const ExperimentConfig& cfg);

/// Seed stream isolating fold f of a run (model init, batch sampling,
/// validation batches all derive from it).
std::uint64_t split_seed(std::uint64_t master_seed, std::size_t fold);

struct TrainOutcome {
  MlpEmbedder model;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};

/// Train one model on a train/test split with the configured loss; the seed
/// argument isolates this split's randomness (model init, batch sampling,
/// validation batches).
TrainOutcome train_on_split(const LabeledDataset& train_ds,
                            const LabeledDataset& test_ds,
                            const ExperimentConfig& cfg,
                            std::uint64_t split_seed);

/// Embed a split with a frozen model and score it: k-NN fit on the train
/// embeddings, clustering metrics on the test embeddings.
EvalReport evaluate_split(const MlpEmbedder& model,
                          const LabeledDataset& train_ds,
                          const LabeledDataset& test_ds, int knn_k,
                          int n_classes);

/**
 * The full protocol: stratified k-fold, per fold a fresh seeded model
 * trained for the configured epochs, evaluation on the held-out fold,
 * aggregation as mean +/- sample std. Module errors are rethrown with fold
 * index and phase attached.
 */
RunReport run_experiment(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// gradient verification

struct GradcheckLossReport {
  std::string loss;
  int instances = 0;
  double max_rel_err_embedding = 0.0;
  double max_rel_err_parameter = 0.0;
  bool pass = false;

  bool operator==(const GradcheckLossReport&) const = default;
};

struct GradcheckReport {
  std::vector<GradcheckLossReport> losses;
  double embedding_tolerance = 1e-6;
  double parameter_tolerance = 1e-5;
  bool pass = false;
};

void to_json(nlohmann::json& j, const GradcheckReport& r);

/**
 * Seeded analytic-vs-central-difference gradient checks, in embedding space
 * and end to end through the network (sigmoid and, except for npair, the L2
 * normalization Jacobian). Tuple structures are frozen per instance and
 * instances falling within 1e-3 of a hinge boundary or a ReLU kink are
 * redrawn, so the finite differences probe a smooth function.
 * corrupt_analytic deliberately damages the analytic gradient (negative
 * control for the checker itself).
 */
GradcheckReport run_gradcheck(const std::vector<LossKind>& losses,
                              std::uint64_t seed, int instances,
                              bool corrupt_analytic = false);

// ---------------------------------------------------------------------------
// multi-seed loss comparison on the synthetic benchmark

struct BenchmarkConfig {
  DatasetSpec dataset = DatasetSpec::synthetic_default();  // 8x80, dim 16, sep 4, sigma 1.5
  std::vector<LossKind> losses = {LossKind::kContrastive, LossKind::kTriplet,
                                  LossKind::kNpair, LossKind::kConstellation};
  std::vector<std::size_t> hidden = {256, 128};
  std::size_t embedding_dim = 32;
  int epochs = 10;
  std::size_t batch_classes = 8;
  std::size_t batch_per_class = 4;
  double learning_rate = 1e-3;
  LossHyper hyper;
  int knn_k = 5;
  int num_seeds = 5;
  std::uint64_t base_seed = 1;
  int holdout_folds = 5;  // fold 0 of a stratified split is the test side
};

struct BenchmarkLossResult {
  std::string loss;
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double final_train_loss = 0.0;
  bool finite = false;  // no NaN anywhere in training or evaluation
};

struct BenchmarkSeedResult {
  std::uint64_t master_seed = 0;
  double untrained_silhouette = 0.0;
  std::vector<BenchmarkLossResult> losses;
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::vector<BenchmarkSeedResult> seeds;
  // ordering summaries over seeds
  int constellation_ge_triplet_silhouette = 0;
  int constellation_gt_untrained_silhouette = 0;
  double min_constellation_accuracy = 0.0;
  bool all_losses_finite = false;
  double wall_clock_seconds = 0.0;
};

void to_json(nlohmann::json& j, const BenchmarkReport& r);
void from_json(const nlohmann::json& j, BenchmarkConfig& cfg);

/// One train/test split per master seed, every configured loss trained from
/// the same initialization, orderings tallied across seeds.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

}  // namespace constel
