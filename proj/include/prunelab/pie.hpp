#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prunelab/prediction_store.hpp"

namespace prunelab::pie {

/// Mean over successful runs of the probabilities at sparsity `k`.
Eigen::MatrixXd mean_predictions(const PredictionStore& store, double k);

struct Agreement {
  std::vector<double> rho;          // per image, in [-1, 1]
  std::vector<bool> degenerate;     // constant prediction vector; rho recorded as 0
  std::size_t num_degenerate = 0;
  std::size_t distinct_values = 0;  // diagnostic: number of distinct rho values
};

/// Per-image Spearman correlation across classes between two mean-prediction
/// matrices (images x classes). Needs at least three classes.
Agreement per_image_agreement(const Eigen::MatrixXd& base, const Eigen::MatrixXd& sparse);

/// Convenience overload averaging the store at `k_base` and `k_sparse`.
Agreement per_image_agreement(const PredictionStore& store, double k_base = 0.0, double k_sparse = 0.9);

struct PieFlags {
  std::vector<bool> flags;
  std::size_t count = 0;
  double threshold_rho = 0.0;  // largest flagged agreement
  bool uniform_tie = false;    // every agreement value identical
};

inline constexpr double kPieFraction = 0.05;

/// Flags exactly floor(fraction * N) images with the smallest agreement;
/// ties at the boundary go to the lower image index.
PieFlags flag_pies(const std::vector<double>& agreement, double fraction = kPieFraction);

/// Ratio of the positive fraction among PIEs to that among non-PIEs.
struct Ratio {
  double value = 0.0;       // +inf when the non-PIE fraction is zero; NaN when both are zero
  bool infinite = false;
  bool undefined = false;
  std::int64_t pie_count = 0;       // PIEs in the category
  std::int64_t non_pie_count = 0;   // non-PIEs in the category
};

inline constexpr std::array<const char*, 5> kCountBuckets = {"0", "1", "2", "3", "4+"};

struct Characterization {
  std::vector<Ratio> class_ratio;
  std::array<Ratio, 5> count_ratio;
  std::int64_t num_pies = 0;
  std::int64_t num_non_pies = 0;
};

Characterization characterize(const std::vector<bool>& flags, const LabelMatrix& labels);

struct PieReport {
  Agreement agreement;
  PieFlags flags;
  Characterization characterization;
};

PieReport run_pie_analysis(const PredictionStore& store, double k_base = 0.0, double k_sparse = 0.9,
                           double fraction = kPieFraction);

}  // namespace prunelab::pie
