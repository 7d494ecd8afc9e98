#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "prunelab/metrics.hpp"
#include "prunelab/prediction_store.hpp"
#include "prunelab/stats.hpp"

namespace prunelab::analysis {

/// AP for every (successful run, sparsity, evaluable class).
struct ApTensor {
  std::size_t runs = 0;
  std::size_t sparsities = 0;
  std::vector<std::size_t> class_index;   // store class index of each evaluable class
  std::vector<std::string> class_names;   // evaluable classes
  std::vector<std::string> excluded;      // classes without test positives
  std::vector<double> values;             // [run][k][class]

  std::size_t num_classes() const { return class_index.size(); }
  double& at(std::size_t run, std::size_t k, std::size_t c) { return values[(run * sparsities + k) * num_classes() + c]; }
  double at(std::size_t run, std::size_t k, std::size_t c) const { return values[(run * sparsities + k) * num_classes() + c]; }
};

ApTensor ap_tensor(const PredictionStore& store);

struct ForgettabilityCurve {
  std::size_t class_index = 0;  // store class index
  std::string class_name;
  std::vector<double> values;   // median relative AP change per grid index; values[0] == 0
};

struct CurveSet {
  std::vector<ForgettabilityCurve> curves;
  std::vector<std::string> excluded;  // zero baseline AP in some run
};

/// Per class and sparsity: median over runs of (AP_k - AP_0) / AP_0.
CurveSet forgettability_curves(const ApTensor& ap);

struct OverallRow {
  double k = 0.0;
  double median_mean_ap = 0.0;
  stats::TestResult welch;  // baseline (k = 0) against this k
  bool degenerate = false;  // both samples constant; p set to 1 (equal means) or 0
};

struct OverallDrop {
  std::vector<OverallRow> rows;
  std::optional<double> first_significant_k;
};

inline constexpr double kSignificance = 0.05;

/// Mean-over-classes AP per run, compared between k = 0 and each k with
/// Welch's test. The first significant k is the smallest k whose p < 0.05 and
/// whose median mean-AP lies below the baseline median.
OverallDrop overall_drop_analysis(const ApTensor& ap, const pruning::SparsityGrid& grid);

/// Mean squared difference between two curves on the same grid.
double fcd(const ForgettabilityCurve& a, const ForgettabilityCurve& b);

inline constexpr double kFirstDropThreshold = 0.20;

/// Smallest k > 0 whose curve value is <= -threshold.
std::optional<double> first_drop_sparsity(const ForgettabilityCurve& curve, const pruning::SparsityGrid& grid,
                                          double threshold = kFirstDropThreshold);

inline constexpr double kTailSparsity = 0.95;

/// Curve value at k = 0.95; throws InvalidArgument when the grid lacks it.
double tail_impact(const ForgettabilityCurve& curve, const pruning::SparsityGrid& grid);

/// First-drop value assigned to classes that never cross the threshold.
inline constexpr double kNeverDropped = 1.0;

struct FrequencyCorrelations {
  std::size_t num_classes = 0;
  std::vector<double> log_train_frequency;
  std::vector<double> first_drop;             // kNeverDropped where never crossed
  std::size_t never_crossed = 0;
  metrics::SpearmanResult first_drop_rho;
  /// Sensitivity check: same correlation with never-crossing classes excluded
  /// (absent when fewer than three classes remain or the values are constant).
  std::optional<metrics::SpearmanResult> first_drop_rho_excluding;
  std::vector<double> tail;                   // empty when the grid lacks 0.95
  std::optional<metrics::SpearmanResult> tail_rho;
};

/// Spearman correlations of log training frequency (natural log) against
/// first-drop sparsity and tail impact. `train_frequencies` is indexed by
/// store class index. Requires at least five curves.
FrequencyCorrelations frequency_correlations(const CurveSet& curves, const pruning::SparsityGrid& grid,
                                             const std::vector<double>& train_frequencies);

struct PairRecord {
  std::size_t class_a = 0;
  std::size_t class_b = 0;
  std::string name_a;
  std::string name_b;
  double fcd = 0.0;
  double abs_log_freq_diff = 0.0;
  double iou_quarter = 0.0;
};

/// One record per unordered pair of curves whose classes have nonzero test
/// frequency. `test_counts` and `iou` are indexed by store class index.
std::vector<PairRecord> pair_table(const CurveSet& curves, const std::vector<std::int64_t>& test_counts,
                                   const Eigen::MatrixXd& iou);

struct PairRegression {
  static constexpr std::array<const char*, 4> kTerms = {"intercept", "abs_log_freq_diff", "iou_quarter",
                                                        "abs_log_freq_diff:iou_quarter"};
  stats::OlsFit fit;
  // Absent when FCD or the predictor is constant.
  std::optional<metrics::SpearmanResult> rho_log_freq_diff;
  std::optional<metrics::SpearmanResult> rho_iou_quarter;
  std::optional<double> pearson_log_freq_diff;
  std::optional<double> pearson_iou_quarter;
};

/// OLS of FCD on 1, |LogFreqDiff|, IoU^(1/4) and their product.
PairRegression pair_regression(const std::vector<PairRecord>& pairs);

/// Evaluates the interaction model at one point.
double predict_fcd(const Eigen::Vector4d& coefficients, double abs_log_freq_diff, double iou_quarter);

}  // namespace prunelab::analysis
