#include "constel/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "constel/numerics.hpp"

namespace constel {

namespace {

// seed-stream salts; any fixed distinct values work
constexpr std::uint64_t kSaltData = 0xDA7A;
constexpr std::uint64_t kSaltFolds = 0xF01D;
constexpr std::uint64_t kSaltSplit = 0x5B117000;
constexpr std::uint64_t kSaltModel = 0x30DE1;
constexpr std::uint64_t kSaltTrain = 0x7EA12;
constexpr std::uint64_t kSaltVal = 0xE7A1000;

}  // namespace

std::string to_string(LossKind loss) {
  switch (loss) {
    case LossKind::kContrastive: return "contrastive";
    case LossKind::kTriplet: return "triplet";
    case LossKind::kNpair: return "npair";
    case LossKind::kConstellation: return "constellation";
  }
  throw std::invalid_argument("unknown loss kind");
}

LossKind loss_from_string(const std::string& name) {
  if (name == "contrastive") return LossKind::kContrastive;
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "npair") return LossKind::kNpair;
  if (name == "constellation") return LossKind::kConstellation;
  throw std::invalid_argument("unknown loss '" + name +
                              "' (expected contrastive|triplet|npair|constellation)");
}

std::string to_string(MiningMode mode) {
  switch (mode) {
    case MiningMode::kHard: return "hard";
    case MiningMode::kSemiHard: return "semihard";
    case MiningMode::kAllValid: return "all_valid";
  }
  throw std::invalid_argument("unknown mining mode");
}

MiningMode mining_from_string(const std::string& name) {
  if (name == "hard") return MiningMode::kHard;
  if (name == "semihard") return MiningMode::kSemiHard;
  if (name == "all_valid") return MiningMode::kAllValid;
  throw std::invalid_argument("unknown mining mode '" + name +
                              "' (expected hard|semihard|all_valid)");
}

std::vector<std::size_t> ExperimentConfig::layer_sizes(std::size_t input_dim) const {
  std::vector<std::size_t> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(embedding_dim);
  return sizes;
}

void ExperimentConfig::validate() const {
  hyper.validate();
  if (!dataset.synthetic && dataset.csv_path.empty()) {
    throw std::invalid_argument("config: dataset needs a csv path or synthetic parameters");
  }
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_classes < 1 || batch_per_class < 1) {
    throw std::invalid_argument("config: batch shape must be positive");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
  if (folds < 2) throw std::invalid_argument("config: folds must be >= 2");
  if (knn_k < 1) throw std::invalid_argument("config: knn_k must be >= 1");
  if (embedding_dim < 2) throw std::invalid_argument("config: embedding_dim must be >= 2");
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
  if (cfg.dataset.synthetic) {
    j["dataset"]["synthetic"] = {{"classes", cfg.dataset.classes},
                                 {"per_class", cfg.dataset.per_class},
                                 {"dim", cfg.dataset.dim},
                                 {"sep", cfg.dataset.sep},
                                 {"sigma", cfg.dataset.sigma}};
  } else {
    j["dataset"]["csv"] = cfg.dataset.csv_path;
  }
  if (cfg.grid) j["grid"] = {cfg.grid->first, cfg.grid->second};
  j["loss"] = to_string(cfg.loss);
  j["margin"] = cfg.hyper.margin;
  j["alpha"] = cfg.hyper.alpha;
  j["k_negatives"] = cfg.hyper.k_negatives;
  j["hidden"] = cfg.hidden;
  j["embedding_dim"] = cfg.embedding_dim;
  j["epochs"] = cfg.epochs;
  j["batch_classes"] = cfg.batch_classes;
  j["batch_per_class"] = cfg.batch_per_class;
  j["learning_rate"] = cfg.learning_rate;
  j["mining"] = to_string(cfg.mining);
  j["folds"] = cfg.folds;
  j["knn_k"] = cfg.knn_k;
  j["seed"] = cfg.seed;
}

void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  cfg = ExperimentConfig{};
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("csv")) {
      cfg.dataset.csv_path = d.at("csv").get<std::string>();
      cfg.dataset.synthetic = false;
    } else if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      cfg.dataset.synthetic = true;
      cfg.dataset.classes = s.value("classes", cfg.dataset.classes);
      cfg.dataset.per_class = s.value("per_class", cfg.dataset.per_class);
      cfg.dataset.dim = s.value("dim", cfg.dataset.dim);
      cfg.dataset.sep = s.value("sep", cfg.dataset.sep);
      cfg.dataset.sigma = s.value("sigma", cfg.dataset.sigma);
    }
  }
  if (j.contains("grid")) {
    const auto g = j.at("grid").get<std::vector<std::size_t>>();
    if (g.size() != 2) throw std::invalid_argument("config: grid must be [height, width]");
    cfg.grid = std::make_pair(g[0], g[1]);
  }
  if (j.contains("loss")) cfg.loss = loss_from_string(j.at("loss").get<std::string>());
  cfg.hyper.margin = j.value("margin", cfg.hyper.margin);
  cfg.hyper.alpha = j.value("alpha", cfg.hyper.alpha);
  cfg.hyper.k_negatives = j.value("k_negatives", cfg.hyper.k_negatives);
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_classes = j.value("batch_classes", cfg.batch_classes);
  cfg.batch_per_class = j.value("batch_per_class", cfg.batch_per_class);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  if (j.contains("mining")) cfg.mining = mining_from_string(j.at("mining").get<std::string>());
  cfg.folds = j.value("folds", cfg.folds);
  cfg.knn_k = j.value("knn_k", cfg.knn_k);
  cfg.seed = j.value("seed", cfg.seed);
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"accuracy", r.accuracy},
       {"balanced_accuracy", r.balanced_accuracy},
       {"davies_bouldin", r.davies_bouldin},
       {"silhouette", r.silhouette},
       {"per_class_recall", r.per_class_recall},
       {"support", r.support}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.accuracy = j.at("accuracy").get<double>();
  r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
  r.davies_bouldin = j.at("davies_bouldin").get<double>();
  r.silhouette = j.at("silhouette").get<double>();
  r.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
  r.support = j.at("support").get<std::vector<std::size_t>>();
}

namespace {

void to_json(nlohmann::json& j, const MetricSummary& m) {
  j = {{"accuracy", m.accuracy},
       {"balanced_accuracy", m.balanced_accuracy},
       {"davies_bouldin", m.davies_bouldin},
       {"silhouette", m.silhouette}};
}

void from_json(const nlohmann::json& j, MetricSummary& m) {
  m.accuracy = j.at("accuracy").get<double>();
  m.balanced_accuracy = j.at("balanced_accuracy").get<double>();
  m.davies_bouldin = j.at("davies_bouldin").get<double>();
  m.silhouette = j.at("silhouette").get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const RunReport& r) {
  to_json(j["config"], r.config);
  j["folds"] = r.folds;
  to_json(j["mean"], r.mean);
  to_json(j["std"], r.std_dev);
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
}

void from_json(const nlohmann::json& j, RunReport& r) {
  from_json(j.at("config"), r.config);
  r.folds = j.at("folds").get<std::vector<EvalReport>>();
  from_json(j.at("mean"), r.mean);
  from_json(j.at("std"), r.std_dev);
  r.train_loss = j.at("train_loss").get<std::vector<std::vector<double>>>();
  r.val_loss = j.at("val_loss").get<std::vector<std::vector<double>>>();
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
}

// ---------------------------------------------------------------------------
// dataset and folds

LabeledDataset resolve_dataset(const ExperimentConfig& cfg) {
  LabeledDataset ds;
  if (cfg.dataset.synthetic) {
    SeededRng rng(derive_seed(cfg.seed, kSaltData));
    ds = synth_gaussian_clusters(cfg.dataset.classes, cfg.dataset.per_class,
                                 cfg.dataset.dim, cfg.dataset.sep,
                                 cfg.dataset.sigma, rng);
  } else {
    ds = load_csv(cfg.dataset.csv_path);
  }
  if (cfg.grid) {
    ds.grid_shape = cfg.grid;
  }
  ds.validate();
  return ds;
}

std::vector<FoldSplit> experiment_folds(const LabeledDataset& ds,
                                        const ExperimentConfig& cfg) {
  return stratified_kfold(ds, cfg.folds, derive_seed(cfg.seed, kSaltFolds));
}

std::uint64_t split_seed(std::uint64_t master_seed, std::size_t fold) {
  return derive_seed(master_seed, kSaltSplit + fold);
}

// ---------------------------------------------------------------------------
// training

namespace {

/// Gather dataset rows into a batch matrix, applying one uniformly drawn
/// rigid transform per row when the dataset is grid-shaped and an rng is
/// supplied (training only).
Matrix gather_rows(const LabeledDataset& ds, const std::vector<std::size_t>& idx,
                   SeededRng* augment_rng) {
  Matrix out(idx.size(), ds.features.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto src = ds.features.row(idx[k]);
    auto dst = out.row(k);
    if (ds.grid_shape && augment_rng) {
      const GridOp op = kAllGridOps[augment_rng->uniform_index(6)];
      const auto transformed = augment_grid(src, *ds.grid_shape, op);
      std::copy(transformed.begin(), transformed.end(), dst.begin());
    } else {
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

std::vector<int> gather_labels(const LabeledDataset& ds,
                               const std::vector<std::size_t>& idx) {
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (std::size_t i : idx) labels.push_back(ds.labels[i]);
  return labels;
}

std::vector<ContrastivePair> all_pairs(const std::vector<int>& labels) {
  std::vector<ContrastivePair> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      pairs.push_back({i, j, labels[i] != labels[j]});
    }
  }
  return pairs;
}

TripletIndexSet mine_with_fallback(const Matrix& emb,
                                   const std::vector<int>& labels, double alpha,
                                   MiningMode mode) {
  TripletIndexSet set = mine_triplets(emb, labels, alpha, mode);
  if (set.entries.empty() && mode == MiningMode::kSemiHard) {
    set = mine_triplets(emb, labels, alpha, MiningMode::kHard);
  }
  if (set.entries.empty() && mode != MiningMode::kAllValid) {
    set = mine_triplets(emb, labels, alpha, MiningMode::kAllValid);
  }
  return set;
}

std::size_t min_class_count(const LabeledDataset& ds) {
  std::vector<std::size_t> counts(ds.num_classes(), 0);
  for (int l : ds.labels) counts[l] += 1;
  return *std::min_element(counts.begin(), counts.end());
}

/// A freshly built batch: the gathered input rows plus the loss closure over
/// their embeddings. Shared by the train step and the per-epoch validation
/// loss; the balanced batch shape is clamped to what the split can provide.
struct BatchLoss {
  Matrix inputs;
  LossAdapter adapter;
};

BatchLoss assemble_batch(const LabeledDataset& ds, const ExperimentConfig& cfg,
                         SeededRng& rng, bool augment) {
  SeededRng* aug_rng = augment ? &rng : nullptr;
  BatchLoss out;
  if (cfg.loss == LossKind::kNpair) {
    const NPairBatch np = build_npair_batch(ds, rng);
    std::vector<std::size_t> rows = np.anchor_rows;
    rows.insert(rows.end(), np.positive_rows.begin(), np.positive_rows.end());
    out.inputs = gather_rows(ds, rows, aug_rng);
    const std::size_t n = np.anchor_rows.size();
    out.adapter = [n](const Matrix& emb) {
      Matrix anchors(n, emb.cols());
      Matrix positives(n, emb.cols());
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(emb.row(i).begin(), emb.row(i).end(), anchors.row(i).begin());
        std::copy(emb.row(n + i).begin(), emb.row(n + i).end(),
                  positives.row(i).begin());
      }
      return npair_loss(anchors, positives);
    };
    return out;
  }

  const std::size_t classes =
      std::min(cfg.batch_classes, static_cast<std::size_t>(ds.num_classes()));
  const std::size_t per_class = std::min(cfg.batch_per_class, min_class_count(ds));
  const auto idx = sample_balanced_batch(ds, classes, per_class, rng);
  out.inputs = gather_rows(ds, idx, aug_rng);
  const auto labels = gather_labels(ds, idx);

  switch (cfg.loss) {
    case LossKind::kContrastive: {
      auto pairs = all_pairs(labels);
      const double margin = cfg.hyper.margin;
      out.adapter = [pairs = std::move(pairs), margin](const Matrix& emb) {
        return contrastive_loss(pairs, emb, margin);
      };
      break;
    }
    case LossKind::kTriplet: {
      const double alpha = cfg.hyper.alpha;
      const MiningMode mode = cfg.mining;
      out.adapter = [labels, alpha, mode](const Matrix& emb) {
        const TripletIndexSet set = mine_with_fallback(emb, labels, alpha, mode);
        if (set.entries.empty()) {
          return LossResult{0.0, Matrix(emb.rows(), emb.cols())};
        }
        return triplet_loss(set, emb, alpha);
      };
      break;
    }
    case LossKind::kConstellation: {
      // positions within the batch double as indices into its embeddings
      std::vector<std::size_t> positions(idx.size());
      for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
      ConstellationBatch cb = build_constellation_batch(
          positions, labels, cfg.hyper.k_negatives, rng);
      const int k = cfg.hyper.k_negatives;
      out.adapter = [cb = std::move(cb), k](const Matrix& emb) {
        return constellation_loss(cb, emb, k);
      };
      break;
    }
    case LossKind::kNpair:
      break;  // handled above
  }
  return out;
}

std::size_t batch_rows(const LabeledDataset& ds, const ExperimentConfig& cfg) {
  if (cfg.loss == LossKind::kNpair) {
    return 2 * static_cast<std::size_t>(ds.num_classes());
  }
  const std::size_t classes =
      std::min(cfg.batch_classes, static_cast<std::size_t>(ds.num_classes()));
  const std::size_t per_class = std::min(cfg.batch_per_class, min_class_count(ds));
  return classes * per_class;
}

}  // namespace

TrainOutcome train_on_split(const LabeledDataset& train_ds,
                            const LabeledDataset& test_ds,
                            const ExperimentConfig& cfg,
                            std::uint64_t split_seed) {
  SeededRng init_rng(derive_seed(split_seed, kSaltModel));
  TrainOutcome out{
      init_embedder(cfg.layer_sizes(train_ds.features.cols()),
                    cfg.normalize_output(), init_rng),
      {}, {}};
  AdamState adam = make_adam_state(out.model, cfg.learning_rate);
  SeededRng train_rng(derive_seed(split_seed, kSaltTrain));

  const std::size_t rows = batch_rows(train_ds, cfg);
  const std::size_t steps =
      std::max<std::size_t>(1, train_ds.size() / std::max<std::size_t>(1, rows));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      BatchLoss batch = assemble_batch(train_ds, cfg, train_rng, /*augment=*/true);
      epoch_loss += train_step(out.model, adam, batch.inputs, batch.adapter);
    }
    out.train_loss.push_back(epoch_loss / static_cast<double>(steps));

    // validation loss on a freshly built, per-epoch-seeded test batch
    SeededRng val_rng(derive_seed(split_seed, kSaltVal + static_cast<std::uint64_t>(epoch)));
    BatchLoss val_batch = assemble_batch(test_ds, cfg, val_rng, /*augment=*/false);
    const Matrix val_emb = embed(out.model, val_batch.inputs);
    out.val_loss.push_back(val_batch.adapter(val_emb).value);
  }
  return out;
}

EvalReport evaluate_split(const MlpEmbedder& model,
                          const LabeledDataset& train_ds,
                          const LabeledDataset& test_ds, int knn_k,
                          int n_classes) {
  const Matrix train_emb = embed(model, train_ds.features);
  const Matrix test_emb = embed(model, test_ds.features);
  const auto predictions = knn_classify(train_emb, train_ds.labels, test_emb, knn_k);
  const auto scores = classification_scores(predictions, test_ds.labels, n_classes);

  EvalReport report;
  report.accuracy = scores.accuracy;
  report.balanced_accuracy = scores.balanced_accuracy;
  report.per_class_recall = scores.per_class_recall;
  report.support = scores.support;
  report.davies_bouldin = davies_bouldin(test_emb, test_ds.labels);
  report.silhouette = silhouette(test_emb, test_ds.labels);
  return report;
}

namespace {

MetricSummary summary_mean(const std::vector<EvalReport>& folds) {
  MetricSummary m;
  for (const auto& f : folds) {
    m.accuracy += f.accuracy;
    m.balanced_accuracy += f.balanced_accuracy;
    m.davies_bouldin += f.davies_bouldin;
    m.silhouette += f.silhouette;
  }
  const double n = static_cast<double>(folds.size());
  m.accuracy /= n;
  m.balanced_accuracy /= n;
  m.davies_bouldin /= n;
  m.silhouette /= n;
  return m;
}

MetricSummary summary_std(const std::vector<EvalReport>& folds,
                          const MetricSummary& mean) {
  MetricSummary s;
  if (folds.size() < 2) return s;
  for (const auto& f : folds) {
    s.accuracy += (f.accuracy - mean.accuracy) * (f.accuracy - mean.accuracy);
    s.balanced_accuracy += (f.balanced_accuracy - mean.balanced_accuracy) *
                           (f.balanced_accuracy - mean.balanced_accuracy);
    s.davies_bouldin += (f.davies_bouldin - mean.davies_bouldin) *
                        (f.davies_bouldin - mean.davies_bouldin);
    s.silhouette += (f.silhouette - mean.silhouette) * (f.silhouette - mean.silhouette);
  }
  const double n1 = static_cast<double>(folds.size() - 1);  // sample convention
  s.accuracy = std::sqrt(s.accuracy / n1);
  s.balanced_accuracy = std::sqrt(s.balanced_accuracy / n1);
  s.davies_bouldin = std::sqrt(s.davies_bouldin / n1);
  s.silhouette = std::sqrt(s.silhouette / n1);
  return s;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const LabeledDataset ds = resolve_dataset(cfg);
  const auto folds = experiment_folds(ds, cfg);
  const int n_classes = ds.num_classes();

  RunReport report;
  report.config = cfg;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::string where = "fold " + std::to_string(f);
    try {
      const LabeledDataset train_ds = subset(ds, folds[f].train_indices);
      const LabeledDataset test_ds = subset(ds, folds[f].test_indices);

      TrainOutcome trained;
      try {
        trained = train_on_split(train_ds, test_ds, cfg, split_seed(cfg.seed, f));
      } catch (const std::exception& e) {
        throw std::runtime_error(where + ", phase training: " + e.what());
      }
      report.train_loss.push_back(trained.train_loss);
      report.val_loss.push_back(trained.val_loss);

      try {
        report.folds.push_back(evaluate_split(trained.model, train_ds, test_ds,
                                              cfg.knn_k, n_classes));
      } catch (const std::exception& e) {
        throw std::runtime_error(where + ", phase evaluation: " + e.what());
      }
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }

  report.mean = summary_mean(report.folds);
  report.std_dev = summary_std(report.folds, report.mean);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace constel
