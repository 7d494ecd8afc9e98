#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "prunelab/nn.hpp"

namespace prunelab::pruning {

/// Sparsity ratios in [0,1), strictly increasing, starting at 0.
class SparsityGrid {
 public:
  SparsityGrid() : ratios_{0.0} {}
  explicit SparsityGrid(std::vector<double> ratios);

  /// Parses "start:stop:step" (inclusive stop) or a comma-separated list.
  static SparsityGrid parse(std::string_view spec);
  /// {0, 0.05, ..., 0.95}.
  static SparsityGrid standard();

  const std::vector<double>& ratios() const { return ratios_; }
  std::size_t size() const { return ratios_.size(); }
  double operator[](std::size_t i) const { return ratios_[i]; }
  /// Index of the ratio equal to `k` within 1e-9, if any.
  std::optional<std::size_t> index_of(double k) const;

  bool operator==(const SparsityGrid&) const = default;

 private:
  std::vector<double> ratios_;
};

using WeightMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One mask per weight matrix; 1 keeps the weight, 0 prunes it.
struct PruneMask {
  std::vector<WeightMask> masks;
  double requested_sparsity = 0.0;
  double achieved_sparsity = 0.0;
  std::size_t zeros() const;
  std::size_t total() const;
};

struct PrunedModel {
  nn::MlpModel model;
  PruneMask mask;
};

/// floor(k * W), guarded against representation error in k.
std::size_t prune_count(double k, std::size_t total);

/// Global unstructured magnitude pruning: among all weight-matrix entries
/// (biases excluded) zero the floor(k * W) with smallest |w|, ties broken by
/// (layer, row, column) ascending. The input model is not modified.
PrunedModel l1_global_prune(const nn::MlpModel& model, double k);

struct SweepEntry {
  double k = 0.0;
  PrunedModel pruned;
};

/// One-shot pruning of the original model at every ratio of the grid.
std::vector<SweepEntry> sweep(const nn::MlpModel& model, const SparsityGrid& grid);

void save_mask(const PruneMask& mask, const std::vector<int>& layer_sizes, const std::filesystem::path& path);
PruneMask load_mask(const std::filesystem::path& path);

}  // namespace prunelab::pruning
