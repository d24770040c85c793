#pragma once

#include <cstddef>
#include <vector>

#include "constel/matrix.hpp"
#include "constel/rng.hpp"

namespace constel {

struct LabeledDataset;  // data.hpp

/// (anchor, positive, negative) row indices. anchor and positive share a
/// class, the negative does not, anchor != positive.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triplet&) const = default;
  auto operator<=>(const Triplet&) const = default;
};

struct TripletIndexSet {
  std::vector<Triplet> entries;
};

/// Two aligned lists of dataset indices, one anchor and one positive per
/// class, ordered by ascending class id.
struct NPairBatch {
  std::vector<std::size_t> anchor_rows;
  std::vector<std::size_t> positive_rows;
};

/// One anchor-positive pair plus exactly K negatives drawn from K distinct
/// non-anchor classes.
struct ConstellationEntry {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
};

struct ConstellationBatch {
  std::vector<ConstellationEntry> entries;
};

enum class MiningMode { kHard, kSemiHard, kAllValid };

/**
 * Class-balanced sampling: picks class_count classes uniformly without
 * replacement, then per_class samples from each, also without replacement.
 * Deterministic given the rng state.
 */
std::vector<std::size_t> sample_balanced_batch(const LabeledDataset& ds,
                                               std::size_t class_count,
                                               std::size_t per_class,
                                               SeededRng& rng);

/**
 * Online triplet mining over a batch of embeddings. Emits every (a, p, n)
 * whose squared distances satisfy the mode's predicate:
 *   hard      d(a,n) < d(a,p)
 *   semihard  d(a,p) <= d(a,n) < d(a,p) + alpha
 *   all_valid d(a,p) - d(a,n) + alpha > 0
 * Triplets are listed in ascending (a, p, n) order. Returns an empty set when
 * no triplet matches; that is not an error (the trainer falls back).
 */
TripletIndexSet mine_triplets(const Matrix& embeddings,
                              const std::vector<int>& labels, double alpha,
                              MiningMode mode);

/// One (anchor, positive) pair per class, distinct samples, classes in
/// ascending id order. Throws if any class has fewer than two samples.
NPairBatch build_npair_batch(const LabeledDataset& ds, SeededRng& rng);

/**
 * Constellation batch over an already-sampled balanced batch. For every
 * ordered anchor-positive pair within each class, emits one entry whose
 * k_negatives negatives come from k_negatives distinct non-anchor classes
 * (classes sampled without replacement, then one batch member uniformly from
 * each). Entry indices are positions into batch_indices, so they address rows
 * of the embedding matrix produced from that batch.
 */
ConstellationBatch build_constellation_batch(
    const std::vector<std::size_t>& batch_indices,
    const std::vector<int>& labels, int k_negatives, SeededRng& rng);

}  // namespace constel
