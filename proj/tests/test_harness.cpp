#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "constel/harness.hpp"

using namespace constel;

namespace {

ExperimentConfig smoke_config(LossKind loss) {
  ExperimentConfig cfg;
  cfg.dataset.synthetic = true;
  cfg.dataset.classes = 2;
  cfg.dataset.per_class = 8;
  cfg.dataset.dim = 4;
  cfg.dataset.sep = 4.0;
  cfg.dataset.sigma = 1.0;
  cfg.loss = loss;
  cfg.hyper.k_negatives = 1;
  cfg.hidden = {8};
  cfg.embedding_dim = 4;
  cfg.epochs = 2;
  cfg.batch_classes = 2;
  cfg.batch_per_class = 2;
  cfg.folds = 2;
  cfg.knn_k = 3;
  cfg.seed = 5;
  return cfg;
}

bool finite_report(const RunReport& r) {
  for (const auto& f : r.folds) {
    if (!std::isfinite(f.accuracy) || !std::isfinite(f.silhouette) ||
        !std::isfinite(f.davies_bouldin) || !std::isfinite(f.balanced_accuracy)) {
      return false;
    }
  }
  for (const auto& curve : r.train_loss) {
    for (double v : curve) {
      if (!std::isfinite(v)) return false;
    }
  }
  for (const auto& curve : r.val_loss) {
    for (double v : curve) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("experiment config JSON round trip") {
  ExperimentConfig cfg = smoke_config(LossKind::kConstellation);
  cfg.grid = std::make_pair(std::size_t{2}, std::size_t{2});
  cfg.mining = MiningMode::kHard;
  const nlohmann::json j = cfg;
  const auto parsed = j.get<ExperimentConfig>();
  CHECK(parsed == cfg);

  ExperimentConfig csv_cfg = cfg;
  csv_cfg.dataset = DatasetSpec{};
  csv_cfg.dataset.csv_path = "some.csv";
  const auto csv_parsed = nlohmann::json(csv_cfg).get<ExperimentConfig>();
  CHECK(csv_parsed == csv_cfg);
}

TEST_CASE("config validation catches bad shapes") {
  ExperimentConfig cfg = smoke_config(LossKind::kTriplet);
  cfg.folds = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = smoke_config(LossKind::kTriplet);
  cfg.hyper.margin = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = smoke_config(LossKind::kTriplet);
  cfg.dataset.synthetic = false;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("normalization flag is derived from the loss") {
  CHECK(smoke_config(LossKind::kTriplet).normalize_output());
  CHECK(smoke_config(LossKind::kContrastive).normalize_output());
  CHECK(smoke_config(LossKind::kConstellation).normalize_output());
  CHECK_FALSE(smoke_config(LossKind::kNpair).normalize_output());
}

TEST_CASE("two-fold smoke run produces finite metrics for every loss") {
  for (LossKind loss : {LossKind::kContrastive, LossKind::kTriplet,
                        LossKind::kNpair, LossKind::kConstellation}) {
    const RunReport report = run_experiment(smoke_config(loss));
    REQUIRE(report.folds.size() == 2);
    REQUIRE(report.train_loss.size() == 2);
    REQUIRE(report.train_loss[0].size() == 2);
    REQUIRE(report.val_loss[0].size() == 2);
    CHECK(finite_report(report));
  }
}

TEST_CASE("identical configs replay to identical reports apart from wall clock") {
  const ExperimentConfig cfg = smoke_config(LossKind::kConstellation);
  RunReport one = run_experiment(cfg);
  RunReport two = run_experiment(cfg);
  one.wall_clock_seconds = 0.0;
  two.wall_clock_seconds = 0.0;
  CHECK(one == two);
}

TEST_CASE("fold partitions do not depend on the loss") {
  const ExperimentConfig triplet_cfg = smoke_config(LossKind::kTriplet);
  ExperimentConfig constellation_cfg = smoke_config(LossKind::kConstellation);
  const LabeledDataset ds = resolve_dataset(triplet_cfg);

  const auto a = experiment_folds(ds, triplet_cfg);
  const auto b = experiment_folds(ds, constellation_cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t f = 0; f < a.size(); ++f) {
    CHECK(std::set<std::size_t>(a[f].test_indices.begin(), a[f].test_indices.end()) ==
          std::set<std::size_t>(b[f].test_indices.begin(), b[f].test_indices.end()));
  }
}

TEST_CASE("report mean and std match a direct recomputation") {
  const RunReport report = run_experiment(smoke_config(LossKind::kTriplet));
  const auto recompute = [&](auto pick) {
    double mean = 0.0;
    for (const auto& f : report.folds) mean += pick(f);
    mean /= static_cast<double>(report.folds.size());
    double var = 0.0;
    for (const auto& f : report.folds) var += (pick(f) - mean) * (pick(f) - mean);
    const double sd = report.folds.size() < 2
                          ? 0.0
                          : std::sqrt(var / static_cast<double>(report.folds.size() - 1));
    return std::make_pair(mean, sd);
  };
  const auto [acc_mean, acc_sd] = recompute([](const EvalReport& f) { return f.accuracy; });
  CHECK(std::abs(report.mean.accuracy - acc_mean) < 1e-12);
  CHECK(std::abs(report.std_dev.accuracy - acc_sd) < 1e-12);
  const auto [sil_mean, sil_sd] = recompute([](const EvalReport& f) { return f.silhouette; });
  CHECK(std::abs(report.mean.silhouette - sil_mean) < 1e-12);
  CHECK(std::abs(report.std_dev.silhouette - sil_sd) < 1e-12);
}

TEST_CASE("run report JSON round trips exactly") {
  const RunReport report = run_experiment(smoke_config(LossKind::kNpair));
  const nlohmann::json j = report;
  const auto parsed = j.get<RunReport>();
  CHECK(parsed == report);
  CHECK(nlohmann::json(parsed).dump(2) == j.dump(2));
}

TEST_CASE("grid-shaped data trains with augmentation enabled") {
  ExperimentConfig cfg = smoke_config(LossKind::kTriplet);
  cfg.grid = std::make_pair(std::size_t{2}, std::size_t{2});  // dim 4 rows
  const RunReport report = run_experiment(cfg);
  CHECK(finite_report(report));
}

TEST_CASE("training a fully separated batch falls back to a zero-signal step") {
  // sep huge and sigma tiny: even all_valid mining comes up empty
  ExperimentConfig cfg = smoke_config(LossKind::kTriplet);
  cfg.dataset.sep = 100.0;
  cfg.dataset.sigma = 1e-6;
  const RunReport report = run_experiment(cfg);
  CHECK(finite_report(report));
  CHECK(report.folds[0].accuracy == 1.0);
}

TEST_CASE("ten epochs at default model hyperparameters stay finite") {
  ExperimentConfig cfg;  // default hidden [256,128], embedding 128, lr 1e-3
  cfg.dataset.synthetic = true;
  cfg.dataset.per_class = 20;
  cfg.loss = LossKind::kConstellation;
  cfg.epochs = 10;
  cfg.folds = 2;
  cfg.seed = 17;
  const RunReport report = run_experiment(cfg);
  CHECK(finite_report(report));
  REQUIRE(report.train_loss[0].size() == 10);
  // the logarithmic losses should actually be descending on a separable set
  CHECK(report.train_loss[0].back() < report.train_loss[0].front());
}

TEST_CASE("gradcheck passes for every loss and fails the negative control") {
  const std::vector<LossKind> all = {LossKind::kContrastive, LossKind::kTriplet,
                                     LossKind::kNpair, LossKind::kConstellation};
  const GradcheckReport report = run_gradcheck(all, 7, 5);
  REQUIRE(report.losses.size() == 4);
  for (const auto& r : report.losses) {
    CHECK(r.pass);
    CHECK(r.max_rel_err_embedding < 1e-6);
    CHECK(r.max_rel_err_parameter < 1e-5);
  }
  CHECK(report.pass);

  const GradcheckReport corrupted =
      run_gradcheck({LossKind::kTriplet}, 7, 2, /*corrupt_analytic=*/true);
  CHECK_FALSE(corrupted.pass);
}

TEST_CASE("benchmark smoke run tallies orderings") {
  BenchmarkConfig cfg;
  cfg.dataset.classes = 3;
  cfg.dataset.per_class = 12;
  cfg.dataset.dim = 6;
  cfg.hidden = {8};
  cfg.embedding_dim = 4;
  cfg.epochs = 1;
  cfg.batch_classes = 3;
  cfg.batch_per_class = 2;
  cfg.hyper.k_negatives = 1;
  cfg.knn_k = 1;
  cfg.num_seeds = 2;
  cfg.holdout_folds = 3;
  cfg.losses = {LossKind::kTriplet, LossKind::kConstellation};
  const BenchmarkReport report = run_benchmark(cfg);
  REQUIRE(report.seeds.size() == 2);
  for (const auto& s : report.seeds) {
    CHECK(s.losses.size() == 2);
    CHECK(std::isfinite(s.untrained_silhouette));
  }
  CHECK(report.constellation_ge_triplet_silhouette >= 0);
  CHECK(report.constellation_ge_triplet_silhouette <= 2);
}
