#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace prunelab::metrics {

/// Scores and binary ground truth for one class.
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

/// Non-interpolated average precision. Items are ordered by descending score,
/// ties by ascending original index; AP is the mean over positives of the
/// precision at that positive's rank. Throws DegenerateInput without positives.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
double average_precision(const ScoredLabels& sl);

struct MeanApResult {
  double mean_ap = 0.0;
  std::vector<double> per_class;          // NaN for excluded classes
  std::vector<std::string> excluded;      // names of classes without positives
};

/// Unweighted mean of per-class AP over classes with at least one positive.
/// `names` may be empty, in which case excluded classes are reported by index.
MeanApResult mean_ap(const std::vector<ScoredLabels>& per_class, const std::vector<std::string>& names = {});

/// Mann-Whitney AUROC with ties counted one half.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(const ScoredLabels& sl);

double pearson(std::span<const double> x, std::span<const double> y);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  /// Set when n < 10: the t approximation for the p-value is weak there.
  bool small_sample = false;
};

/// Pearson correlation of fractional ranks with a two-sided p-value from the
/// t approximation on n - 2 degrees of freedom.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

}  // namespace prunelab::metrics
