#include "constel/batching.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

#include "constel/data.hpp"
#include "constel/numerics.hpp"

namespace constel {

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(
    const std::vector<int>& labels, int num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(i);
  }
  return by_class;
}

/// First k elements of a seeded partial Fisher-Yates shuffle of v.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> v,
                                                    std::size_t k,
                                                    SeededRng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(v.size() - i);
    std::swap(v[i], v[j]);
  }
  v.resize(k);
  return v;
}

}  // namespace

std::vector<std::size_t> sample_balanced_batch(const LabeledDataset& ds,
                                               std::size_t class_count,
                                               std::size_t per_class,
                                               SeededRng& rng) {
  if (class_count == 0 || per_class == 0) {
    throw std::invalid_argument("sample_balanced_batch: class_count and per_class must be > 0");
  }
  const int total_classes = ds.num_classes();
  if (static_cast<std::size_t>(total_classes) < class_count) {
    throw std::invalid_argument("sample_balanced_batch: dataset has " +
                                std::to_string(total_classes) +
                                " classes, need " + std::to_string(class_count));
  }
  auto by_class = indices_by_class(ds.labels, total_classes);

  std::vector<std::size_t> class_ids(total_classes);
  for (int c = 0; c < total_classes; ++c) class_ids[c] = c;
  const auto chosen = sample_without_replacement(class_ids, class_count, rng);

  std::vector<std::size_t> batch;
  batch.reserve(class_count * per_class);
  for (std::size_t c : chosen) {
    const auto& members = by_class[c];
    if (members.size() < per_class) {
      throw std::invalid_argument("sample_balanced_batch: class " +
                                  std::to_string(c) + " has " +
                                  std::to_string(members.size()) +
                                  " samples, need " + std::to_string(per_class));
    }
    const auto picks = sample_without_replacement(members, per_class, rng);
    batch.insert(batch.end(), picks.begin(), picks.end());
  }
  return batch;
}

TripletIndexSet mine_triplets(const Matrix& embeddings,
                              const std::vector<int>& labels, double alpha,
                              MiningMode mode) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) {
    throw std::invalid_argument("mine_triplets: labels length does not match rows");
  }
  bool two_classes = false;
  bool repeated_class = false;
  for (std::size_t i = 0; i < n && !(two_classes && repeated_class); ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (labels[i] != labels[j]) two_classes = true;
      else repeated_class = true;
    }
  }
  if (!two_classes || !repeated_class) {
    throw std::invalid_argument(
        "mine_triplets: batch needs >=2 classes and a class with >=2 samples");
  }

  const Matrix d2 = pairwise_sq_dists(embeddings);
  TripletIndexSet out;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double d_ap = d2(a, p);
      for (std::size_t neg = 0; neg < n; ++neg) {
        if (labels[neg] == labels[a]) continue;
        const double d_an = d2(a, neg);
        bool keep = false;
        switch (mode) {
          case MiningMode::kHard:
            keep = d_an < d_ap;
            break;
          case MiningMode::kSemiHard:
            keep = d_ap <= d_an && d_an < d_ap + alpha;
            break;
          case MiningMode::kAllValid:
            keep = d_ap - d_an + alpha > 0.0;
            break;
        }
        if (keep) out.entries.push_back({a, p, neg});
      }
    }
  }
  return out;
}

NPairBatch build_npair_batch(const LabeledDataset& ds, SeededRng& rng) {
  const int num_classes = ds.num_classes();
  if (num_classes < 2) {
    throw std::invalid_argument("build_npair_batch: need >=2 classes");
  }
  auto by_class = indices_by_class(ds.labels, num_classes);

  NPairBatch batch;
  batch.anchor_rows.reserve(num_classes);
  batch.positive_rows.reserve(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const auto& members = by_class[c];
    if (members.size() < 2) {
      throw std::invalid_argument("build_npair_batch: class " +
                                  std::to_string(c) +
                                  " has fewer than 2 samples");
    }
    const auto pair = sample_without_replacement(members, 2, rng);
    batch.anchor_rows.push_back(pair[0]);
    batch.positive_rows.push_back(pair[1]);
  }
  return batch;
}

ConstellationBatch build_constellation_batch(
    const std::vector<std::size_t>& batch_indices,
    const std::vector<int>& labels, int k_negatives, SeededRng& rng) {
  if (k_negatives < 1) {
    throw std::invalid_argument("build_constellation_batch: K must be >= 1");
  }
  // Group batch positions by class, classes in ascending id order.
  std::map<int, std::vector<std::size_t>> positions_by_class;
  for (std::size_t pos = 0; pos < batch_indices.size(); ++pos) {
    const std::size_t row = batch_indices[pos];
    if (row >= labels.size()) {
      throw std::invalid_argument("build_constellation_batch: batch index out of range");
    }
    positions_by_class[labels[row]].push_back(pos);
  }
  const std::size_t class_count = positions_by_class.size();
  if (class_count <= static_cast<std::size_t>(k_negatives)) {
    throw std::invalid_argument(
        "build_constellation_batch: K exceeds available negative classes (" +
        std::to_string(k_negatives) + " >= " + std::to_string(class_count) + ")");
  }

  std::vector<int> class_ids;
  class_ids.reserve(class_count);
  for (const auto& [c, _] : positions_by_class) class_ids.push_back(c);

  ConstellationBatch out;
  for (int anchor_class : class_ids) {
    const auto& members = positions_by_class[anchor_class];
    std::vector<std::size_t> other_classes;
    for (int c : class_ids) {
      if (c != anchor_class) other_classes.push_back(static_cast<std::size_t>(c));
    }
    for (std::size_t ai = 0; ai < members.size(); ++ai) {
      for (std::size_t pi = 0; pi < members.size(); ++pi) {
        if (pi == ai) continue;
        ConstellationEntry entry;
        entry.anchor = members[ai];
        entry.positive = members[pi];
        const auto neg_classes = sample_without_replacement(
            other_classes, static_cast<std::size_t>(k_negatives), rng);
        entry.negatives.reserve(neg_classes.size());
        for (std::size_t nc : neg_classes) {
          const auto& pool = positions_by_class[static_cast<int>(nc)];
          entry.negatives.push_back(pool[rng.uniform_index(pool.size())]);
        }
        out.entries.push_back(std::move(entry));
      }
    }
  }
  return out;
}

}  // namespace constel
