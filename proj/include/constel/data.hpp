#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "constel/matrix.hpp"
#include "constel/rng.hpp"

namespace constel {

/**
 * Feature matrix with parallel class labels. Labels are contiguous 0-based
 * ids; label_names keeps the original tokens when the dataset came from a
 * CSV (index = class id). grid_shape marks rows that are flattened H x W
 * grids, which enables the rigid-transform augmentation.
 */
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::optional<std::pair<std::size_t, std::size_t>> grid_shape;
  std::string name;
  std::vector<std::string> label_names;

  std::size_t size() const { return labels.size(); }
  int num_classes() const;
  void validate() const;
};

/// Rows of ds selected by indices; labels and grid metadata carried over.
LabeledDataset subset(const LabeledDataset& ds,
                      const std::vector<std::size_t>& indices);

/**
 * Load the project CSV format: header "f0,...,f{D-1},label", one sample per
 * row. Label tokens may be anything; they are remapped to contiguous 0-based
 * ids in order of first appearance, with the mapping kept in label_names.
 * Missing file, empty file, ragged rows and non-numeric cells raise distinct
 * errors.
 */
LabeledDataset load_csv(const std::string& path);

/// Write the CSV format read by load_csv. Floats are printed with 17
/// significant digits so a round trip reproduces them exactly.
void save_csv(const LabeledDataset& ds, const std::string& path);

/**
 * Gaussian cluster benchmark generator. Class c is centered at sep * u_c
 * with unit directions u_c (axis-aligned when classes <= dim, random unit
 * directions beyond that). sigma is the RMS distance of samples from their
 * class center, i.e. per-coordinate standard deviation sigma / sqrt(dim).
 */
LabeledDataset synth_gaussian_clusters(int classes, int per_class, int dim,
                                       double sep, double sigma,
                                       SeededRng& rng);

struct FoldSplit {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/**
 * Deterministic stratified k-fold split. Fold membership is a function of
 * (sample content, label, seed) only, never of row order, so permuting the
 * dataset rows yields the same partition as sets, and every loss trained on
 * the same (dataset, k, seed) sees identical folds. Per-class test counts
 * across folds differ by at most one. Throws naming the class if any class
 * has fewer than k samples.
 */
std::vector<FoldSplit> stratified_kfold(const LabeledDataset& ds, int k,
                                        std::uint64_t seed);

enum class GridOp { kIdentity, kFlipH, kFlipV, kRot90, kRot180, kRot270 };

inline constexpr GridOp kAllGridOps[] = {GridOp::kIdentity, GridOp::kFlipH,
                                         GridOp::kFlipV,    GridOp::kRot90,
                                         GridOp::kRot180,   GridOp::kRot270};

/// Apply a rigid transform to a flattened H x W grid. Rotations require a
/// square grid. Output length equals input length.
std::vector<double> augment_grid(std::span<const double> row,
                                 std::pair<std::size_t, std::size_t> grid_shape,
                                 GridOp op);

}  // namespace constel
