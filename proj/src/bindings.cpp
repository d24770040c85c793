#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "constel/harness.hpp"
#include "constel/numerics.hpp"

namespace py = pybind11;
using namespace constel;

namespace {

using NumpyArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const NumpyArray& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(arr.shape(0));
  const auto cols = static_cast<std::size_t>(arr.shape(1));
  std::vector<double> data(arr.data(), arr.data() + rows * cols);
  return Matrix(rows, cols, std::move(data));
}

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

GridOp grid_op_from_string(const std::string& name) {
  if (name == "identity") return GridOp::kIdentity;
  if (name == "flip_h") return GridOp::kFlipH;
  if (name == "flip_v") return GridOp::kFlipV;
  if (name == "rot90") return GridOp::kRot90;
  if (name == "rot180") return GridOp::kRot180;
  if (name == "rot270") return GridOp::kRot270;
  throw std::invalid_argument("unknown grid op '" + name + "'");
}

LabeledDataset make_dataset(const NumpyArray& features,
                            const std::vector<int>& labels) {
  LabeledDataset ds;
  ds.features = to_matrix(features);
  ds.labels = labels;
  ds.validate();
  return ds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Metric-learning embedding losses, smart batching, and evaluation metrics";

  // numerics
  m.def("gram_matrix",
        [](const NumpyArray& x) { return to_numpy(gram_matrix(to_matrix(x))); },
        py::arg("x"));
  m.def("pairwise_sq_dists",
        [](const NumpyArray& x) { return to_numpy(pairwise_sq_dists(to_matrix(x))); },
        py::arg("x"));
  m.def("log1p_sum_exp",
        [](const std::vector<double>& z) { return log1p_sum_exp(z); },
        py::arg("z"), "log(1 + sum(exp(z)))) without overflow");
  m.def("l2_normalize_rows",
        [](const NumpyArray& x) {
          auto r = l2_normalize_rows(to_matrix(x));
          return py::make_tuple(to_numpy(r.rows),
                                std::vector<bool>(r.floored.begin(), r.floored.end()));
        },
        py::arg("x"));

  // losses: each returns (value, grad)
  m.def("contrastive_loss",
        [](const std::vector<std::tuple<std::size_t, std::size_t, int>>& pairs,
           const NumpyArray& x, double margin) {
          std::vector<ContrastivePair> ps;
          ps.reserve(pairs.size());
          for (const auto& [i, j, y] : pairs) ps.push_back({i, j, y != 0});
          const auto r = contrastive_loss(ps, to_matrix(x), margin);
          return py::make_tuple(r.value, to_numpy(r.grad));
        },
        py::arg("pairs"), py::arg("x"), py::arg("margin") = 1.0,
        "pairs are (i, j, y) with y=1 for different-class pairs");
  m.def("triplet_loss",
        [](const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& triplets,
           const NumpyArray& x, double alpha) {
          TripletIndexSet set;
          for (const auto& [a, p, n] : triplets) set.entries.push_back({a, p, n});
          const auto r = triplet_loss(set, to_matrix(x), alpha);
          return py::make_tuple(r.value, to_numpy(r.grad));
        },
        py::arg("triplets"), py::arg("x"), py::arg("alpha") = 0.2);
  m.def("npair_loss",
        [](const NumpyArray& anchors, const NumpyArray& positives) {
          const auto r = npair_loss(to_matrix(anchors), to_matrix(positives));
          return py::make_tuple(r.value, to_numpy(r.grad));
        },
        py::arg("anchors"), py::arg("positives"),
        "gradient rows: anchors first, then positives");
  m.def("constellation_loss",
        [](const std::vector<std::tuple<std::size_t, std::size_t,
                                        std::vector<std::size_t>>>& entries,
           const NumpyArray& x, int k_negatives) {
          ConstellationBatch batch;
          for (const auto& [a, p, negs] : entries) batch.entries.push_back({a, p, negs});
          const auto r = constellation_loss(batch, to_matrix(x), k_negatives);
          return py::make_tuple(r.value, to_numpy(r.grad));
        },
        py::arg("entries"), py::arg("x"), py::arg("k_negatives"));

  // batching
  m.def("mine_triplets",
        [](const NumpyArray& emb, const std::vector<int>& labels, double alpha,
           const std::string& mode) {
          const auto set = mine_triplets(to_matrix(emb), labels, alpha,
                                         mining_from_string(mode));
          std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
          out.reserve(set.entries.size());
          for (const auto& t : set.entries) out.emplace_back(t.anchor, t.positive, t.negative);
          return out;
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("alpha") = 0.2,
        py::arg("mode") = "semihard");
  m.def("sample_balanced_batch",
        [](const NumpyArray& features, const std::vector<int>& labels,
           std::size_t class_count, std::size_t per_class, std::uint64_t seed) {
          SeededRng rng(seed);
          return sample_balanced_batch(make_dataset(features, labels),
                                       class_count, per_class, rng);
        },
        py::arg("features"), py::arg("labels"), py::arg("class_count"),
        py::arg("per_class"), py::arg("seed"));
  m.def("build_npair_batch",
        [](const NumpyArray& features, const std::vector<int>& labels,
           std::uint64_t seed) {
          SeededRng rng(seed);
          const auto b = build_npair_batch(make_dataset(features, labels), rng);
          return py::make_tuple(b.anchor_rows, b.positive_rows);
        },
        py::arg("features"), py::arg("labels"), py::arg("seed"));
  m.def("build_constellation_batch",
        [](const std::vector<std::size_t>& batch_indices,
           const std::vector<int>& labels, int k_negatives, std::uint64_t seed) {
          SeededRng rng(seed);
          const auto b = build_constellation_batch(batch_indices, labels,
                                                   k_negatives, rng);
          std::vector<std::tuple<std::size_t, std::size_t, std::vector<std::size_t>>> out;
          out.reserve(b.entries.size());
          for (const auto& e : b.entries) out.emplace_back(e.anchor, e.positive, e.negatives);
          return out;
        },
        py::arg("batch_indices"), py::arg("labels"), py::arg("k_negatives"),
        py::arg("seed"));

  // data
  m.def("synth_gaussian_clusters",
        [](int classes, int per_class, int dim, double sep, double sigma,
           std::uint64_t seed) {
          SeededRng rng(seed);
          const auto ds = synth_gaussian_clusters(classes, per_class, dim, sep,
                                                  sigma, rng);
          return py::make_tuple(to_numpy(ds.features), ds.labels);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("dim"),
        py::arg("sep"), py::arg("sigma"), py::arg("seed"));
  m.def("stratified_kfold",
        [](const NumpyArray& features, const std::vector<int>& labels, int k,
           std::uint64_t seed) {
          const auto folds = stratified_kfold(make_dataset(features, labels), k, seed);
          std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out;
          out.reserve(folds.size());
          for (const auto& f : folds) out.emplace_back(f.train_indices, f.test_indices);
          return out;
        },
        py::arg("features"), py::arg("labels"), py::arg("k"), py::arg("seed"));
  m.def("augment_grid",
        [](const std::vector<double>& row, std::pair<std::size_t, std::size_t> shape,
           const std::string& op) {
          return augment_grid(row, shape, grid_op_from_string(op));
        },
        py::arg("row"), py::arg("grid_shape"), py::arg("op"));
  m.def("load_csv",
        [](const std::string& path) {
          const auto ds = load_csv(path);
          return py::make_tuple(to_numpy(ds.features), ds.labels, ds.label_names);
        },
        py::arg("path"));

  // eval
  m.def("knn_classify",
        [](const NumpyArray& train_emb, const std::vector<int>& train_labels,
           const NumpyArray& test_emb, int k) {
          return knn_classify(to_matrix(train_emb), train_labels,
                              to_matrix(test_emb), k);
        },
        py::arg("train_embeddings"), py::arg("train_labels"),
        py::arg("test_embeddings"), py::arg("k") = 5);
  m.def("classification_scores",
        [](const std::vector<int>& predicted, const std::vector<int>& truth,
           int n_classes) {
          const auto s = classification_scores(predicted, truth, n_classes);
          py::dict d;
          d["accuracy"] = s.accuracy;
          d["balanced_accuracy"] = s.balanced_accuracy;
          d["per_class_recall"] = s.per_class_recall;
          d["support"] = s.support;
          return d;
        },
        py::arg("predicted"), py::arg("truth"), py::arg("n_classes"));
  m.def("davies_bouldin",
        [](const NumpyArray& emb, const std::vector<int>& labels) {
          return davies_bouldin(to_matrix(emb), labels);
        },
        py::arg("embeddings"), py::arg("labels"));
  m.def("silhouette",
        [](const NumpyArray& emb, const std::vector<int>& labels) {
          return silhouette(to_matrix(emb), labels);
        },
        py::arg("embeddings"), py::arg("labels"));
  m.def("pca_project_2d",
        [](const NumpyArray& emb) {
          const auto r = pca_project_2d(to_matrix(emb));
          return py::make_tuple(to_numpy(r.projected), to_numpy(r.components));
        },
        py::arg("embeddings"));

  // model + harness
  py::class_<MlpEmbedder>(m, "MlpEmbedder")
      .def_property_readonly("layer_sizes",
                             [](const MlpEmbedder& e) { return e.layer_sizes; })
      .def_property_readonly("normalize_output",
                             [](const MlpEmbedder& e) { return e.normalize_output; });
  m.def("init_embedder",
        [](const std::vector<std::size_t>& layer_sizes, bool normalize_output,
           std::uint64_t seed) {
          SeededRng rng(seed);
          return init_embedder(layer_sizes, normalize_output, rng);
        },
        py::arg("layer_sizes"), py::arg("normalize_output"), py::arg("seed"));
  m.def("embed",
        [](const MlpEmbedder& model, const NumpyArray& inputs) {
          return to_numpy(embed(model, to_matrix(inputs)));
        },
        py::arg("model"), py::arg("inputs"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def("run_experiment",
        [](const std::string& config_json) {
          const auto cfg = nlohmann::json::parse(config_json).get<ExperimentConfig>();
          const RunReport report = run_experiment(cfg);
          return nlohmann::json(report).dump(2);
        },
        py::arg("config_json"),
        "Full cross-validated protocol; takes and returns JSON documents");
  m.def("gradcheck",
        [](const std::vector<std::string>& losses, std::uint64_t seed,
           int instances) {
          std::vector<LossKind> kinds;
          kinds.reserve(losses.size());
          for (const auto& l : losses) kinds.push_back(loss_from_string(l));
          const auto report = run_gradcheck(kinds, seed, instances);
          return nlohmann::json(report).dump(2);
        },
        py::arg("losses"), py::arg("seed") = 7, py::arg("instances") = 100);
}
