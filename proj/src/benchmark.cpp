#include <algorithm>
#include <chrono>
#include <cmath>

#include "constel/harness.hpp"

namespace constel {

namespace {

constexpr std::uint64_t kSaltBenchSeed = 0xBE7C;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

ExperimentConfig experiment_for(const BenchmarkConfig& cfg, LossKind loss,
                                std::uint64_t master_seed) {
  ExperimentConfig e;
  e.dataset = cfg.dataset;
  e.loss = loss;
  e.hyper = cfg.hyper;
  e.hidden = cfg.hidden;
  e.embedding_dim = cfg.embedding_dim;
  e.epochs = cfg.epochs;
  e.batch_classes = cfg.batch_classes;
  e.batch_per_class = cfg.batch_per_class;
  e.learning_rate = cfg.learning_rate;
  e.knn_k = cfg.knn_k;
  e.folds = cfg.holdout_folds;
  e.seed = master_seed;
  return e;
}

}  // namespace

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkReport report;
  report.config = cfg;
  report.all_losses_finite = true;
  report.min_constellation_accuracy = 1.0;

  for (int s = 0; s < cfg.num_seeds; ++s) {
    BenchmarkSeedResult seed_result;
    seed_result.master_seed = derive_seed(cfg.base_seed, kSaltBenchSeed + s);

    // dataset and split are shared by every loss for this seed
    ExperimentConfig probe = experiment_for(cfg, LossKind::kConstellation,
                                            seed_result.master_seed);
    const LabeledDataset ds = resolve_dataset(probe);
    const auto folds = experiment_folds(ds, probe);
    const LabeledDataset train_ds = subset(ds, folds[0].train_indices);
    const LabeledDataset test_ds = subset(ds, folds[0].test_indices);
    const std::uint64_t seed0 = split_seed(seed_result.master_seed, 0);

    // untrained baseline: a zero-epoch run yields exactly the shared
    // initialization every non-npair loss starts from
    {
      ExperimentConfig zero = probe;
      zero.epochs = 0;
      const TrainOutcome fresh = train_on_split(train_ds, test_ds, zero, seed0);
      const Matrix test_emb = embed(fresh.model, test_ds.features);
      seed_result.untrained_silhouette = silhouette(test_emb, test_ds.labels);
    }

    for (LossKind loss : cfg.losses) {
      const ExperimentConfig e = experiment_for(cfg, loss, seed_result.master_seed);
      BenchmarkLossResult r;
      r.loss = to_string(loss);
      try {
        const TrainOutcome trained = train_on_split(train_ds, test_ds, e, seed0);
        const EvalReport eval = evaluate_split(trained.model, train_ds, test_ds,
                                               e.knn_k, ds.num_classes());
        r.silhouette = eval.silhouette;
        r.davies_bouldin = eval.davies_bouldin;
        r.accuracy = eval.accuracy;
        r.balanced_accuracy = eval.balanced_accuracy;
        r.final_train_loss = trained.train_loss.empty() ? 0.0 : trained.train_loss.back();
        r.finite = all_finite(trained.train_loss) && all_finite(trained.val_loss) &&
                   std::isfinite(eval.silhouette) && std::isfinite(eval.accuracy);
      } catch (const std::exception&) {
        r.finite = false;  // a blown-up run counts against the NaN-free tally
      }
      report.all_losses_finite = report.all_losses_finite && r.finite;
      seed_result.losses.push_back(std::move(r));
    }

    const auto find = [&](LossKind kind) -> const BenchmarkLossResult* {
      for (const auto& r : seed_result.losses) {
        if (r.loss == to_string(kind)) return &r;
      }
      return nullptr;
    };
    const auto* constellation = find(LossKind::kConstellation);
    const auto* triplet = find(LossKind::kTriplet);
    if (constellation != nullptr) {
      if (constellation->silhouette > seed_result.untrained_silhouette) {
        report.constellation_gt_untrained_silhouette += 1;
      }
      report.min_constellation_accuracy =
          std::min(report.min_constellation_accuracy, constellation->accuracy);
      if (triplet != nullptr && constellation->silhouette >= triplet->silhouette) {
        report.constellation_ge_triplet_silhouette += 1;
      }
    }
    report.seeds.push_back(std::move(seed_result));
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void to_json(nlohmann::json& j, const BenchmarkReport& r) {
  j["config"]["dataset"] = {{"classes", r.config.dataset.classes},
                            {"per_class", r.config.dataset.per_class},
                            {"dim", r.config.dataset.dim},
                            {"sep", r.config.dataset.sep},
                            {"sigma", r.config.dataset.sigma}};
  j["config"]["hidden"] = r.config.hidden;
  j["config"]["embedding_dim"] = r.config.embedding_dim;
  j["config"]["epochs"] = r.config.epochs;
  j["config"]["batch_classes"] = r.config.batch_classes;
  j["config"]["batch_per_class"] = r.config.batch_per_class;
  j["config"]["learning_rate"] = r.config.learning_rate;
  j["config"]["margin"] = r.config.hyper.margin;
  j["config"]["alpha"] = r.config.hyper.alpha;
  j["config"]["k_negatives"] = r.config.hyper.k_negatives;
  j["config"]["knn_k"] = r.config.knn_k;
  j["config"]["num_seeds"] = r.config.num_seeds;
  j["config"]["base_seed"] = r.config.base_seed;
  j["config"]["holdout_folds"] = r.config.holdout_folds;
  auto losses = nlohmann::json::array();
  for (LossKind l : r.config.losses) losses.push_back(to_string(l));
  j["config"]["losses"] = losses;

  j["seeds"] = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    nlohmann::json js;
    js["master_seed"] = s.master_seed;
    js["untrained_silhouette"] = s.untrained_silhouette;
    js["losses"] = nlohmann::json::array();
    for (const auto& l : s.losses) {
      js["losses"].push_back({{"loss", l.loss},
                              {"silhouette", l.silhouette},
                              {"davies_bouldin", l.davies_bouldin},
                              {"accuracy", l.accuracy},
                              {"balanced_accuracy", l.balanced_accuracy},
                              {"final_train_loss", l.final_train_loss},
                              {"finite", l.finite}});
    }
    j["seeds"].push_back(std::move(js));
  }
  j["summary"] = {
      {"constellation_ge_triplet_silhouette", r.constellation_ge_triplet_silhouette},
      {"constellation_gt_untrained_silhouette", r.constellation_gt_untrained_silhouette},
      {"min_constellation_accuracy", r.min_constellation_accuracy},
      {"all_losses_finite", r.all_losses_finite}};
  j["wall_clock_seconds"] = r.wall_clock_seconds;
}

void from_json(const nlohmann::json& j, BenchmarkConfig& cfg) {
  cfg = BenchmarkConfig{};
  if (j.contains("dataset")) {
    const auto& s = j.at("dataset");
    cfg.dataset.classes = s.value("classes", cfg.dataset.classes);
    cfg.dataset.per_class = s.value("per_class", cfg.dataset.per_class);
    cfg.dataset.dim = s.value("dim", cfg.dataset.dim);
    cfg.dataset.sep = s.value("sep", cfg.dataset.sep);
    cfg.dataset.sigma = s.value("sigma", cfg.dataset.sigma);
  }
  if (j.contains("losses")) {
    cfg.losses.clear();
    for (const auto& name : j.at("losses")) {
      cfg.losses.push_back(loss_from_string(name.get<std::string>()));
    }
  }
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_classes = j.value("batch_classes", cfg.batch_classes);
  cfg.batch_per_class = j.value("batch_per_class", cfg.batch_per_class);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.hyper.margin = j.value("margin", cfg.hyper.margin);
  cfg.hyper.alpha = j.value("alpha", cfg.hyper.alpha);
  cfg.hyper.k_negatives = j.value("k_negatives", cfg.hyper.k_negatives);
  cfg.knn_k = j.value("knn_k", cfg.knn_k);
  cfg.num_seeds = j.value("num_seeds", cfg.num_seeds);
  cfg.base_seed = j.value("base_seed", cfg.base_seed);
  cfg.holdout_folds = j.value("holdout_folds", cfg.holdout_folds);
}

}  // namespace constel
