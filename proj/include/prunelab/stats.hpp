#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace prunelab::stats {

struct TestResult {
  double statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
};

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd t_values;
  Eigen::VectorXd p_values;
  Eigen::VectorXd residuals;
  double residual_variance = 0.0;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
};

/// Middle order statistic; an even count averages the two middle values.
double median(std::span<const double> values);

double mean(std::span<const double> values);

/// Unbiased (n - 1) sample variance.
double sample_variance(std::span<const double> values);

/// Ranks starting at 1; tied values share the mean of the ranks they span.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Student t cumulative distribution.
double t_cdf(double x, double df);

/// Chi-square cumulative distribution; zero for x <= 0.
double chi2_cdf(double x, double df);

/// Upper tail 1 - chi2_cdf, computed without cancellation.
double chi2_sf(double x, double df);

/// Two-sided tail probability P(|T| >= |t|) for Student t with `df`.
double t_two_sided_p(double t, double df);

/// Standard normal quantile function.
double normal_quantile(double p);

/// Welch's unequal-variance two-sample t-test (two-sided).
/// Throws DegenerateInput when both samples have zero variance.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Kruskal-Wallis H test with tie correction and a chi-square p-value on
/// (groups - 1) degrees of freedom.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// Least squares via column-pivoted Householder QR on unit-norm scaled
/// columns. Throws RankDeficient naming the dependent column indices when a
/// scaled pivot falls below 1e-10 of the leading one.
OlsFit ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

}  // namespace prunelab::stats
