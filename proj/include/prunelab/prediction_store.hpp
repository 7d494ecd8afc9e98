#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prunelab/datagen.hpp"
#include "prunelab/pruning.hpp"

namespace prunelab {

struct RunStatus {
  bool ok = true;
  std::string message;  // failure reason when !ok
};

/// Test-split probabilities for every (run, sparsity, image, class), stored
/// contiguously in that order. Runs that failed keep NaN slabs and are
/// skipped by analyses.
struct PredictionStore {
  int runs = 0;
  pruning::SparsityGrid grid;
  Eigen::Index images = 0;
  Eigen::Index classes = 0;
  std::vector<double> probs;
  LabelMatrix labels;                      // images x classes
  std::vector<std::string> class_names;
  std::vector<std::int64_t> image_ids;
  std::vector<double> train_frequencies;   // per class, from the training split
  std::vector<RunStatus> run_status;

  static PredictionStore allocate(int runs, pruning::SparsityGrid grid, const LabelMatrix& labels,
                                  std::vector<std::string> class_names);

  std::size_t num_sparsities() const { return grid.size(); }
  std::size_t slab_size() const { return static_cast<std::size_t>(images * classes); }
  std::size_t offset(int run, std::size_t k) const {
    return (static_cast<std::size_t>(run) * grid.size() + k) * slab_size();
  }
  /// Row-major images x classes block for one run and sparsity index.
  std::span<double> slab(int run, std::size_t k) { return {probs.data() + offset(run, k), slab_size()}; }
  std::span<const double> slab(int run, std::size_t k) const { return {probs.data() + offset(run, k), slab_size()}; }
  double at(int run, std::size_t k, Eigen::Index image, Eigen::Index cls) const {
    return probs[offset(run, k) + static_cast<std::size_t>(image * classes + cls)];
  }

  std::vector<int> ok_runs() const;
  /// Throws InvalidArgument describing the first broken invariant.
  void validate() const;
  bool operator==(const PredictionStore& other) const;
};

/// Binary container: an ASCII magic line, a one-line JSON index (shapes, grid,
/// names, ids, train frequencies, run status), then labels as u8 and
/// probabilities as little-endian f64.
void save_store(const PredictionStore& store, const std::filesystem::path& path);
PredictionStore load_store(const std::filesystem::path& path);

/// Long-format debugging dump: run,k,image_id,class,prob.
void save_store_csv(const PredictionStore& store, const std::filesystem::path& path);

}  // namespace prunelab
