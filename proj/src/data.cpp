#include "constel/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace constel {

int LabeledDataset::num_classes() const {
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  return max_label + 1;
}

void LabeledDataset::validate() const {
  if (labels.size() != features.rows()) {
    throw std::invalid_argument("LabeledDataset: labels length does not match rows");
  }
  const int c = num_classes();
  std::vector<bool> seen(c, false);
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("LabeledDataset: negative label");
    seen[l] = true;
  }
  for (int i = 0; i < c; ++i) {
    if (!seen[i]) {
      throw std::invalid_argument("LabeledDataset: class ids not contiguous (class " +
                                  std::to_string(i) + " missing)");
    }
  }
  if (grid_shape && grid_shape->first * grid_shape->second != features.cols()) {
    throw std::invalid_argument("LabeledDataset: grid shape does not match feature width");
  }
}

LabeledDataset subset(const LabeledDataset& ds,
                      const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.features = Matrix(indices.size(), ds.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= ds.size()) {
      throw std::invalid_argument("subset: index out of range");
    }
    const auto src = ds.features.row(i);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.labels.push_back(ds.labels[i]);
  }
  out.grid_shape = ds.grid_shape;
  out.name = ds.name;
  out.label_names = ds.label_names;
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& token, std::size_t row, std::size_t col) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || token.empty()) {
    throw std::runtime_error("load_csv: non-numeric value '" + token +
                             "' at row " + std::to_string(row) + ", column " +
                             std::to_string(col));
  }
  return value;
}

}  // namespace

LabeledDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw std::runtime_error("load_csv: empty file " + path);

  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header.back() != "label") {
    throw std::runtime_error("load_csv: header must end with a 'label' column");
  }
  const std::size_t dim = header.size() - 1;
  if (lines.size() < 2) {
    throw std::runtime_error("load_csv: no data rows in " + path);
  }

  const std::size_t n = lines.size() - 1;
  std::vector<double> data;
  data.reserve(n * dim);
  std::vector<int> labels;
  labels.reserve(n);
  std::map<std::string, int> label_ids;
  std::vector<std::string> label_names;

  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_fields(lines[r]);
    if (fields.size() != dim + 1) {
      throw std::runtime_error("load_csv: row " + std::to_string(r) + " has " +
                               std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(dim + 1));
    }
    for (std::size_t c = 0; c < dim; ++c) {
      data.push_back(parse_double(fields[c], r, c));
    }
    const std::string& token = fields[dim];
    auto it = label_ids.find(token);
    if (it == label_ids.end()) {
      // classes are re-indexed in order of first appearance
      const int id = static_cast<int>(label_ids.size());
      it = label_ids.emplace(token, id).first;
      label_names.push_back(token);
    }
    labels.push_back(it->second);
  }

  LabeledDataset ds;
  ds.features = Matrix(n, dim, std::move(data));
  ds.labels = std::move(labels);
  ds.name = path;
  ds.label_names = std::move(label_names);
  return ds;
}

void save_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path + " for writing");
  const std::size_t dim = ds.features.cols();
  for (std::size_t c = 0; c < dim; ++c) {
    out << 'f' << c << ',';
  }
  out << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.features.row(i);
    for (std::size_t c = 0; c < dim; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
      out << buf << ',';
    }
    const int l = ds.labels[i];
    if (static_cast<std::size_t>(l) < ds.label_names.size()) {
      out << ds.label_names[l];
    } else {
      out << l;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

LabeledDataset synth_gaussian_clusters(int classes, int per_class, int dim,
                                       double sep, double sigma,
                                       SeededRng& rng) {
  if (classes < 2) throw std::invalid_argument("synth_gaussian_clusters: classes must be >= 2");
  if (per_class < 1) throw std::invalid_argument("synth_gaussian_clusters: per_class must be >= 1");
  if (dim < 2) throw std::invalid_argument("synth_gaussian_clusters: dim must be >= 2");
  if (!(sep > 0.0)) throw std::invalid_argument("synth_gaussian_clusters: sep must be > 0");
  if (!(sigma > 0.0)) throw std::invalid_argument("synth_gaussian_clusters: sigma must be > 0");

  // Unit directions for the class centers; axis-aligned while they last.
  Matrix directions(classes, dim);
  for (int c = 0; c < classes; ++c) {
    auto u = directions.row(c);
    if (c < dim) {
      u[c] = 1.0;
    } else {
      double norm_sq = 0.0;
      do {
        norm_sq = 0.0;
        for (std::size_t d = 0; d < u.size(); ++d) {
          u[d] = rng.normal();
          norm_sq += u[d] * u[d];
        }
      } while (norm_sq < 1e-12);
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (std::size_t d = 0; d < u.size(); ++d) u[d] *= inv;
    }
  }

  const double coord_std = sigma / std::sqrt(static_cast<double>(dim));
  LabeledDataset ds;
  ds.features = Matrix(static_cast<std::size_t>(classes) * per_class, dim);
  ds.labels.reserve(ds.features.rows());
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    const auto u = directions.row(c);
    for (int s = 0; s < per_class; ++s, ++row) {
      auto x = ds.features.row(row);
      for (int d = 0; d < dim; ++d) {
        x[d] = sep * u[d] + coord_std * rng.normal();
      }
      ds.labels.push_back(c);
    }
  }
  ds.name = "synthetic-c" + std::to_string(classes) + "-n" +
            std::to_string(per_class) + "-d" + std::to_string(dim);
  return ds;
}

namespace {

/// Content hash of one sample: fold membership must not depend on row order,
/// so the key is built from the seed, the label and the feature bit patterns.
std::uint64_t sample_key(std::uint64_t seed, std::span<const double> features,
                         int label) {
  std::uint64_t h = mix64(seed ^ 0x5354524154ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(label));
  for (double f : features) {
    h = mix64(h ^ std::bit_cast<std::uint64_t>(f));
  }
  return h;
}

}  // namespace

std::vector<FoldSplit> stratified_kfold(const LabeledDataset& ds, int k,
                                        std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  const int num_classes = ds.num_classes();
  if (num_classes < 1) throw std::invalid_argument("stratified_kfold: empty dataset");

  std::vector<std::vector<std::pair<std::uint64_t, std::size_t>>> keyed(num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int c = ds.labels[i];
    keyed[c].emplace_back(sample_key(seed, ds.features.row(i), c), i);
  }

  std::vector<int> fold_of(ds.size(), 0);
  for (int c = 0; c < num_classes; ++c) {
    auto& members = keyed[c];
    if (members.size() < static_cast<std::size_t>(k)) {
      throw std::invalid_argument("stratified_kfold: class " + std::to_string(c) +
                                  " has " + std::to_string(members.size()) +
                                  " samples, need at least k=" + std::to_string(k));
    }
    // Rank by content key (index only breaks exact-duplicate ties), then
    // deal round-robin starting at a seeded per-class offset.
    std::sort(members.begin(), members.end());
    const int offset = static_cast<int>(
        mix64(seed ^ 0x464f4c44ULL ^ static_cast<std::uint64_t>(c)) %
        static_cast<std::uint64_t>(k));
    for (std::size_t r = 0; r < members.size(); ++r) {
      fold_of[members[r].second] = static_cast<int>((r + offset) % k);
    }
  }

  std::vector<FoldSplit> folds(k);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      if (fold_of[i] == f) {
        folds[f].test_indices.push_back(i);
      } else {
        folds[f].train_indices.push_back(i);
      }
    }
  }
  return folds;
}

std::vector<double> augment_grid(std::span<const double> row,
                                 std::pair<std::size_t, std::size_t> grid_shape,
                                 GridOp op) {
  const auto [h, w] = grid_shape;
  if (h * w != row.size()) {
    throw std::invalid_argument("augment_grid: row length does not match grid shape");
  }
  const bool rotation = op == GridOp::kRot90 || op == GridOp::kRot180 || op == GridOp::kRot270;
  if (rotation && h != w) {
    throw std::invalid_argument("augment_grid: rotation requires a square grid");
  }

  std::vector<double> out(row.size());
  const auto at = [&](std::size_t i, std::size_t j) { return row[i * w + j]; };
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double v = 0.0;
      switch (op) {
        case GridOp::kIdentity: v = at(i, j); break;
        case GridOp::kFlipH:    v = at(i, w - 1 - j); break;
        case GridOp::kFlipV:    v = at(h - 1 - i, j); break;
        case GridOp::kRot90:    v = at(h - 1 - j, i); break;
        case GridOp::kRot180:   v = at(h - 1 - i, w - 1 - j); break;
        case GridOp::kRot270:   v = at(j, w - 1 - i); break;
      }
      out[i * w + j] = v;
    }
  }
  return out;
}

}  // namespace constel
