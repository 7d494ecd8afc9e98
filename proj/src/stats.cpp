#include "prunelab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "prunelab/error.hpp"

namespace prunelab::stats {

namespace {

void require_df(double df) {
  if (!(df > 0.0) || !std::isfinite(df)) {
    throw InvalidArgument("degrees of freedom must be positive and finite, got " + std::to_string(df));
  }
}

}  // namespace

double median(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw InvalidArgument("sample variance needs at least two values");
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

double t_cdf(double x, double df) {
  require_df(df);
  if (x == 0.0) return 0.5;
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), x);
}

double chi2_cdf(double x, double df) {
  require_df(df);
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared_distribution<double>(df), x);
}

double chi2_sf(double x, double df) {
  require_df(df);
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

double t_two_sided_p(double t, double df) {
  require_df(df);
  if (std::isnan(t)) throw InvalidArgument("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double p = 2.0 * boost::math::cdf(boost::math::students_t_distribution<double>(df), -std::abs(t));
  return std::min(1.0, p);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch_t_test needs at least two values per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  if (va == 0.0 && vb == 0.0) throw DegenerateInput("welch_t_test: both samples have zero variance");

  TestResult r;
  r.statistic = (mean(a) - mean(b)) / std::sqrt(va + vb);
  r.degrees_of_freedom = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = t_two_sided_p(r.statistic, r.degrees_of_freedom);
  return r;
}

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw InvalidArgument("kruskal_wallis needs at least two groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.size() < 2) throw InvalidArgument("kruskal_wallis needs at least two values per group");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const double n = static_cast<double>(pooled.size());
  const auto ranks = fractional_ranks(pooled);

  double h = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
    offset += g.size();
    h += rank_sum * rank_sum / static_cast<double>(g.size());
  }
  h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_sum = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_sum += t * t * t - t;
    i = j;
  }
  const double correction = 1.0 - tie_sum / (n * n * n - n);
  if (correction <= 0.0) throw DegenerateInput("kruskal_wallis: all values are identical");

  TestResult r;
  r.statistic = std::max(0.0, h / correction);
  r.degrees_of_freedom = static_cast<double>(groups.size() - 1);
  r.p_value = chi2_sf(r.statistic, r.degrees_of_freedom);
  return r;
}

OlsFit ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (response.size() != n) throw InvalidArgument("ols_fit: response length does not match design rows");
  if (p == 0 || n <= p) throw InvalidArgument("ols_fit needs n > p >= 1");

  Eigen::VectorXd scale = design.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale(j) == 0.0) scale(j) = 1.0;
  }
  const Eigen::MatrixXd scaled = design * scale.cwiseInverse().asDiagonal();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::ostringstream msg;
    msg << "ols_fit: design matrix has rank " << qr.rank() << " < " << p
        << "; linearly dependent column(s):";
    const auto& perm = qr.colsPermutation().indices();
    std::vector<long> dependent;
    for (Eigen::Index i = qr.rank(); i < p; ++i) {
      msg << ' ' << perm(i);
      dependent.push_back(static_cast<long>(perm(i)));
    }
    throw RankDeficient(msg.str(), std::move(dependent));
  }

  OlsFit fit;
  fit.n = n;
  fit.p = p;
  const Eigen::VectorXd beta_scaled = qr.solve(response);
  fit.coefficients = beta_scaled.cwiseQuotient(scale);
  fit.residuals = response - design * fit.coefficients;
  fit.residual_variance = fit.residuals.squaredNorm() / static_cast<double>(n - p);

  // (X'X)^-1 in the scaled basis is P R^-1 R^-T P'.
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::VectorXd diag_permuted = r_inv.rowwise().squaredNorm();
  Eigen::VectorXd diag(p);
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = 0; i < p; ++i) diag(perm(i)) = diag_permuted(i);

  const double df = static_cast<double>(n - p);
  fit.standard_errors.resize(p);
  fit.t_values.resize(p);
  fit.p_values.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.standard_errors(j) = std::sqrt(fit.residual_variance * diag(j)) / scale(j);
    if (fit.standard_errors(j) > 0.0) {
      fit.t_values(j) = fit.coefficients(j) / fit.standard_errors(j);
      fit.p_values(j) = t_two_sided_p(fit.t_values(j), df);
    } else {
      fit.t_values(j) = fit.coefficients(j) == 0.0 ? 0.0 : std::copysign(INFINITY, fit.coefficients(j));
      fit.p_values(j) = fit.coefficients(j) == 0.0 ? 1.0 : 0.0;
    }
  }
  return fit;
}

}  // namespace prunelab::stats
