#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "constel/harness.hpp"
#include "constel/numerics.hpp"

using namespace constel;

namespace {

void write_json(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
  out << j.dump(2) << "\n";
}

/// Flags override values loaded from --config; only flags the user actually
/// passed are applied.
struct ConfigFlags {
  std::string config_path, csv_path, loss, mining;
  int classes = 8, per_class = 80, dim = 16;
  double sep = 4.0, sigma = 1.5;
  double margin = 1.0, alpha = 0.2, learning_rate = 1e-3;
  int k_negatives = 3, epochs = 10, folds = 10, knn_k = 5;
  std::size_t batch_classes = 8, batch_per_class = 4, embedding_dim = 128;
  std::vector<std::size_t> hidden = {256, 128};
  std::vector<std::size_t> grid;
  std::uint64_t seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "full experiment config as a JSON file");
    cmd->add_option("--data", csv_path, "dataset CSV (overrides synthetic source)");
    cmd->add_option("--classes", classes, "synthetic: number of classes");
    cmd->add_option("--per-class", per_class, "synthetic: samples per class");
    cmd->add_option("--dim", dim, "synthetic: feature dimension");
    cmd->add_option("--sep", sep, "synthetic: center spacing");
    cmd->add_option("--sigma", sigma, "synthetic: RMS spread around centers");
    cmd->add_option("--loss", loss, "contrastive|triplet|npair|constellation");
    cmd->add_option("--margin", margin, "contrastive margin m");
    cmd->add_option("--alpha", alpha, "triplet slack");
    cmd->add_option("-K,--k-negatives", k_negatives, "constellation negatives per anchor");
    cmd->add_option("--mining", mining, "hard|semihard|all_valid");
    cmd->add_option("--hidden", hidden, "hidden layer sizes");
    cmd->add_option("--embedding-dim", embedding_dim, "embedding layer size");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-classes", batch_classes, "classes per balanced batch");
    cmd->add_option("--batch-per-class", batch_per_class, "samples per class per batch");
    cmd->add_option("--lr", learning_rate, "Adam learning rate");
    cmd->add_option("--folds", folds, "cross-validation folds");
    cmd->add_option("--knn-k", knn_k, "k for the k-NN validation classifier");
    cmd->add_option("--grid", grid, "treat rows as HxW grids: --grid H W");
    cmd->add_option("--seed", seed, "master seed");
  }

  ExperimentConfig resolve(const CLI::App* cmd) const {
    ExperimentConfig cfg;
    cfg.dataset.synthetic = true;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open config " + config_path);
      nlohmann::json j;
      in >> j;
      cfg = j.get<ExperimentConfig>();
    }
    const auto passed = [&](const std::string& flag) {
      return cmd->count(flag) > 0;
    };
    if (passed("--data")) {
      cfg.dataset.csv_path = csv_path;
      cfg.dataset.synthetic = false;
    }
    if (passed("--classes")) cfg.dataset.classes = classes;
    if (passed("--per-class")) cfg.dataset.per_class = per_class;
    if (passed("--dim")) cfg.dataset.dim = dim;
    if (passed("--sep")) cfg.dataset.sep = sep;
    if (passed("--sigma")) cfg.dataset.sigma = sigma;
    if (passed("--loss")) cfg.loss = loss_from_string(loss);
    if (passed("--margin")) cfg.hyper.margin = margin;
    if (passed("--alpha")) cfg.hyper.alpha = alpha;
    if (passed("--k-negatives")) cfg.hyper.k_negatives = k_negatives;
    if (passed("--mining")) cfg.mining = mining_from_string(mining);
    if (passed("--hidden")) cfg.hidden = hidden;
    if (passed("--embedding-dim")) cfg.embedding_dim = embedding_dim;
    if (passed("--epochs")) cfg.epochs = epochs;
    if (passed("--batch-classes")) cfg.batch_classes = batch_classes;
    if (passed("--batch-per-class")) cfg.batch_per_class = batch_per_class;
    if (passed("--lr")) cfg.learning_rate = learning_rate;
    if (passed("--folds")) cfg.folds = folds;
    if (passed("--knn-k")) cfg.knn_k = knn_k;
    if (passed("--seed")) cfg.seed = seed;
    if (passed("--grid")) {
      if (grid.size() != 2) throw std::runtime_error("--grid needs H W");
      cfg.grid = std::make_pair(grid[0], grid[1]);
    }
    return cfg;
  }
};

int cmd_gen_data(int classes, int per_class, int dim, double sep, double sigma,
                 std::uint64_t seed, const std::string& out_path) {
  SeededRng rng(seed);
  const LabeledDataset ds =
      synth_gaussian_clusters(classes, per_class, dim, sep, sigma, rng);
  save_csv(ds, out_path);
  std::cout << "wrote " << ds.size() << " samples (" << classes << " classes, dim "
            << dim << ") to " << out_path << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::size_t fold,
              const std::string& model_out, const std::string& out_path) {
  cfg.validate();
  const LabeledDataset ds = resolve_dataset(cfg);
  const auto folds = experiment_folds(ds, cfg);
  if (fold >= folds.size()) {
    throw std::runtime_error("fold index out of range (have " +
                             std::to_string(folds.size()) + " folds)");
  }
  const LabeledDataset train_ds = subset(ds, folds[fold].train_indices);
  const LabeledDataset test_ds = subset(ds, folds[fold].test_indices);

  const TrainOutcome trained =
      train_on_split(train_ds, test_ds, cfg, split_seed(cfg.seed, fold));
  const EvalReport eval =
      evaluate_split(trained.model, train_ds, test_ds, cfg.knn_k, ds.num_classes());

  if (!model_out.empty()) save_model(trained.model, model_out);

  nlohmann::json j;
  to_json(j["config"], cfg);
  j["fold"] = fold;
  j["train_loss"] = trained.train_loss;
  j["val_loss"] = trained.val_loss;
  to_json(j["metrics"], eval);
  write_json(j, out_path);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& csv_path,
             int knn_k, int knn_folds, std::uint64_t seed,
             const std::string& out_path) {
  const MlpEmbedder model = load_model(model_path);
  const LabeledDataset ds = load_csv(csv_path);
  ds.validate();
  const Matrix emb = embed(model, ds.features);

  nlohmann::json j;
  j["model"] = model_path;
  j["data"] = csv_path;
  j["davies_bouldin"] = davies_bouldin(emb, ds.labels);
  j["silhouette"] = silhouette(emb, ds.labels);

  // k-NN accuracy without retraining: stratified cross-prediction over the
  // embedded rows
  LabeledDataset emb_ds;
  emb_ds.features = emb;
  emb_ds.labels = ds.labels;
  const auto folds = stratified_kfold(emb_ds, knn_folds, seed);
  std::vector<int> predictions(ds.size(), -1);
  for (const auto& f : folds) {
    const LabeledDataset tr = subset(emb_ds, f.train_indices);
    const LabeledDataset te = subset(emb_ds, f.test_indices);
    const auto pred = knn_classify(tr.features, tr.labels, te.features, knn_k);
    for (std::size_t i = 0; i < f.test_indices.size(); ++i) {
      predictions[f.test_indices[i]] = pred[i];
    }
  }
  const auto scores = classification_scores(predictions, ds.labels, ds.num_classes());
  j["accuracy"] = scores.accuracy;
  j["balanced_accuracy"] = scores.balanced_accuracy;
  j["per_class_recall"] = scores.per_class_recall;
  j["support"] = scores.support;
  j["knn_k"] = knn_k;
  j["knn_folds"] = knn_folds;
  write_json(j, out_path);
  return 0;
}

int cmd_project(const std::string& model_path, const std::string& csv_path,
                const std::string& out_path) {
  const MlpEmbedder model = load_model(model_path);
  const LabeledDataset ds = load_csv(csv_path);
  ds.validate();
  const Matrix emb = embed(model, ds.features);
  const PcaResult pca = pca_project_2d(emb);
  write_scatter_csv(out_path, pca.projected, ds.labels, ds.label_names);
  std::cout << "wrote " << ds.size() << " projected points to " << out_path << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& loss, std::uint64_t seed, int instances,
                  bool corrupt, const std::string& out_path) {
  std::vector<LossKind> kinds;
  if (loss == "all") {
    kinds = {LossKind::kContrastive, LossKind::kTriplet, LossKind::kNpair,
             LossKind::kConstellation};
  } else {
    kinds = {loss_from_string(loss)};
  }
  const GradcheckReport report = run_gradcheck(kinds, seed, instances, corrupt);
  for (const auto& r : report.losses) {
    std::printf("%-13s max rel err: embedding %.3e, parameter %.3e  [%s]\n",
                r.loss.c_str(), r.max_rel_err_embedding, r.max_rel_err_parameter,
                r.pass ? "pass" : "FAIL");
  }
  if (!out_path.empty()) write_json(nlohmann::json(report), out_path);
  return report.pass ? 0 : 1;
}

int cmd_benchmark(BenchmarkConfig cfg, const std::string& losses_csv,
                  const std::string& out_path) {
  if (!losses_csv.empty()) {
    cfg.losses.clear();
    std::string token;
    for (char c : losses_csv + ",") {
      if (c == ',') {
        if (!token.empty()) cfg.losses.push_back(loss_from_string(token));
        token.clear();
      } else {
        token.push_back(c);
      }
    }
  }
  const BenchmarkReport report = run_benchmark(cfg);
  std::printf("constellation >= triplet silhouette: %d/%d seeds\n",
              report.constellation_ge_triplet_silhouette, cfg.num_seeds);
  std::printf("trained > untrained silhouette:     %d/%d seeds\n",
              report.constellation_gt_untrained_silhouette, cfg.num_seeds);
  std::printf("min constellation accuracy:          %.4f\n",
              report.min_constellation_accuracy);
  std::printf("all losses finite:                   %s\n",
              report.all_losses_finite ? "yes" : "no");
  write_json(nlohmann::json(report), out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metric-learning embedding trainer and validation suite"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic cluster CSV");
  int g_classes = 8, g_per_class = 80, g_dim = 16;
  double g_sep = 4.0, g_sigma = 1.5;
  std::uint64_t g_seed = 42;
  std::string g_out = "data.csv";
  gen->add_option("--classes", g_classes);
  gen->add_option("--per-class", g_per_class);
  gen->add_option("--dim", g_dim);
  gen->add_option("--sep", g_sep);
  gen->add_option("--sigma", g_sigma);
  gen->add_option("--seed", g_seed);
  gen->add_option("--out", g_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train one fold and write report/checkpoint");
  ConfigFlags train_flags;
  train_flags.attach(train);
  std::size_t t_fold = 0;
  std::string t_model_out, t_out;
  train->add_option("--fold", t_fold, "which fold to hold out");
  train->add_option("--model-out", t_model_out, "checkpoint path");
  train->add_option("--out", t_out, "report JSON path (default stdout)");

  // run: the full cross-validated protocol
  auto* run = app.add_subcommand("run", "full k-fold experiment (all folds)");
  ConfigFlags run_flags;
  run_flags.attach(run);
  std::string r_out;
  run->add_option("--out", r_out, "report JSON path (default stdout)");

  // eval
  auto* eval = app.add_subcommand("eval", "score a checkpoint against a CSV");
  std::string e_model, e_data, e_out;
  int e_knn_k = 5, e_knn_folds = 5;
  std::uint64_t e_seed = 42;
  eval->add_option("--model", e_model)->required();
  eval->add_option("--data", e_data)->required();
  eval->add_option("--knn-k", e_knn_k);
  eval->add_option("--knn-folds", e_knn_folds);
  eval->add_option("--seed", e_seed);
  eval->add_option("--out", e_out, "report JSON path (default stdout)");

  // project
  auto* project = app.add_subcommand("project", "2-D PCA scatter of embeddings");
  std::string p_model, p_data, p_out = "scatter.csv";
  std::uint64_t p_seed = 42;
  project->add_option("--model", p_model)->required();
  project->add_option("--data", p_data)->required();
  project->add_option("--out", p_out)->required();
  project->add_option("--seed", p_seed, "accepted for interface symmetry; the projection is deterministic");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "analytic-vs-numeric gradient check");
  std::string gc_loss = "all", gc_out;
  std::uint64_t gc_seed = 7;
  int gc_instances = 100;
  bool gc_corrupt = false;
  grad->add_option("--loss", gc_loss, "loss name or 'all'");
  grad->add_option("--seed", gc_seed);
  grad->add_option("--instances", gc_instances);
  grad->add_flag("--corrupt-analytic", gc_corrupt,
                 "negative control: damage the analytic gradient");
  grad->add_option("--out", gc_out, "report JSON path");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "multi-seed loss comparison");
  BenchmarkConfig bench_cfg;
  std::string b_losses, b_out, b_config;
  bench->add_option("--config", b_config, "full benchmark config as a JSON file");
  bench->add_option("--seeds", bench_cfg.num_seeds, "number of master seeds");
  bench->add_option("--seed", bench_cfg.base_seed, "base seed");
  bench->add_option("--classes", bench_cfg.dataset.classes);
  bench->add_option("--per-class", bench_cfg.dataset.per_class);
  bench->add_option("--dim", bench_cfg.dataset.dim);
  bench->add_option("--sep", bench_cfg.dataset.sep);
  bench->add_option("--sigma", bench_cfg.dataset.sigma);
  bench->add_option("--embedding-dim", bench_cfg.embedding_dim);
  bench->add_option("--epochs", bench_cfg.epochs);
  bench->add_option("-K,--k-negatives", bench_cfg.hyper.k_negatives);
  bench->add_option("--knn-k", bench_cfg.knn_k);
  bench->add_option("--losses", b_losses, "comma-separated loss subset");
  bench->add_option("--out", b_out, "report JSON path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(g_classes, g_per_class, g_dim, g_sep, g_sigma, g_seed, g_out);
    }
    if (train->parsed()) {
      return cmd_train(train_flags.resolve(train), t_fold, t_model_out, t_out);
    }
    if (run->parsed()) {
      const RunReport report = run_experiment(run_flags.resolve(run));
      write_json(nlohmann::json(report), r_out);
      return 0;
    }
    if (eval->parsed()) {
      return cmd_eval(e_model, e_data, e_knn_k, e_knn_folds, e_seed, e_out);
    }
    if (project->parsed()) {
      return cmd_project(p_model, p_data, p_out);
    }
    if (grad->parsed()) {
      return cmd_gradcheck(gc_loss, gc_seed, gc_instances, gc_corrupt, gc_out);
    }
    if (bench->parsed()) {
      BenchmarkConfig resolved;
      if (!b_config.empty()) {
        std::ifstream in(b_config);
        if (!in) throw std::runtime_error("cannot open config " + b_config);
        nlohmann::json j;
        in >> j;
        resolved = j.get<BenchmarkConfig>();
        // explicitly passed flags win over the config file
        if (bench->count("--seeds")) resolved.num_seeds = bench_cfg.num_seeds;
        if (bench->count("--seed")) resolved.base_seed = bench_cfg.base_seed;
        if (bench->count("--classes")) resolved.dataset.classes = bench_cfg.dataset.classes;
        if (bench->count("--per-class")) resolved.dataset.per_class = bench_cfg.dataset.per_class;
        if (bench->count("--dim")) resolved.dataset.dim = bench_cfg.dataset.dim;
        if (bench->count("--sep")) resolved.dataset.sep = bench_cfg.dataset.sep;
        if (bench->count("--sigma")) resolved.dataset.sigma = bench_cfg.dataset.sigma;
        if (bench->count("--embedding-dim")) resolved.embedding_dim = bench_cfg.embedding_dim;
        if (bench->count("--epochs")) resolved.epochs = bench_cfg.epochs;
        if (bench->count("--k-negatives")) resolved.hyper.k_negatives = bench_cfg.hyper.k_negatives;
        if (bench->count("--knn-k")) resolved.knn_k = bench_cfg.knn_k;
      } else {
        resolved = bench_cfg;
      }
      return cmd_benchmark(resolved, b_losses, b_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
