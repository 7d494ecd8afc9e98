#include "prunelab/pie.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "prunelab/error.hpp"
#include "prunelab/metrics.hpp"

namespace prunelab::pie {

Eigen::MatrixXd mean_predictions(const PredictionStore& store, double k) {
  const auto idx = store.grid.index_of(k);
  if (!idx) throw InvalidArgument("mean_predictions: sparsity " + std::to_string(k) + " is not in the grid");
  const auto runs = store.ok_runs();
  if (runs.empty()) throw InvalidArgument("mean_predictions: store has no successful runs");
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(store.images, store.classes);
  for (int r : runs) {
    const auto slab = store.slab(r, *idx);
    sum += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        slab.data(), store.images, store.classes);
  }
  return sum / static_cast<double>(runs.size());
}

Agreement per_image_agreement(const Eigen::MatrixXd& base, const Eigen::MatrixXd& sparse) {
  if (base.rows() != sparse.rows() || base.cols() != sparse.cols()) {
    throw InvalidArgument("per_image_agreement: prediction matrices differ in shape");
  }
  if (base.cols() < 3) throw InvalidArgument("per_image_agreement needs at least three classes");
  Agreement out;
  out.rho.resize(static_cast<std::size_t>(base.rows()));
  out.degenerate.assign(static_cast<std::size_t>(base.rows()), false);
  std::vector<double> a(static_cast<std::size_t>(base.cols())), b(a.size());
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      a[static_cast<std::size_t>(c)] = base(i, c);
      b[static_cast<std::size_t>(c)] = sparse(i, c);
    }
    try {
      out.rho[static_cast<std::size_t>(i)] = metrics::spearman(a, b).rho;
    } catch (const DegenerateInput&) {
      out.rho[static_cast<std::size_t>(i)] = 0.0;
      out.degenerate[static_cast<std::size_t>(i)] = true;
      ++out.num_degenerate;
    }
  }
  out.distinct_values = std::set<double>(out.rho.begin(), out.rho.end()).size();
  return out;
}

Agreement per_image_agreement(const PredictionStore& store, double k_base, double k_sparse) {
  return per_image_agreement(mean_predictions(store, k_base), mean_predictions(store, k_sparse));
}

PieFlags flag_pies(const std::vector<double>& agreement, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("flag_pies: fraction must lie in (0,1)");
  const std::size_t n = agreement.size();
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (m == 0) {
    throw InvalidArgument("flag_pies: floor(fraction * N) is zero for N = " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return agreement[a] < agreement[b]; });

  PieFlags out;
  out.flags.assign(n, false);
  out.count = m;
  for (std::size_t i = 0; i < m; ++i) out.flags[order[i]] = true;
  out.threshold_rho = agreement[order[m - 1]];
  out.uniform_tie = std::all_of(agreement.begin(), agreement.end(), [&](double v) { return v == agreement.front(); });
  return out;
}

namespace {

Ratio make_ratio(std::int64_t pie_hits, std::int64_t pies, std::int64_t non_hits, std::int64_t non_pies) {
  Ratio r;
  r.pie_count = pie_hits;
  r.non_pie_count = non_hits;
  const double fp = static_cast<double>(pie_hits) / static_cast<double>(pies);
  const double fn = static_cast<double>(non_hits) / static_cast<double>(non_pies);
  if (fn == 0.0) {
    if (fp == 0.0) {
      r.undefined = true;
      r.value = std::nan("");
    } else {
      r.infinite = true;
      r.value = INFINITY;
    }
  } else {
    r.value = fp / fn;
  }
  return r;
}

}  // namespace

Characterization characterize(const std::vector<bool>& flags, const LabelMatrix& labels) {
  if (flags.size() != static_cast<std::size_t>(labels.rows())) throw InvalidArgument("characterize: flags and labels differ in length");
  Characterization out;
  for (bool f : flags) (f ? out.num_pies : out.num_non_pies) += 1;
  if (out.num_pies == 0 || out.num_non_pies == 0) throw InvalidArgument("characterize: PIE and non-PIE groups must both be nonempty");

  const auto classes = labels.cols();
  std::vector<std::int64_t> pie_pos(static_cast<std::size_t>(classes), 0), non_pos(static_cast<std::size_t>(classes), 0);
  std::array<std::int64_t, 5> pie_bucket{}, non_bucket{};
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    const bool pie = flags[static_cast<std::size_t>(i)];
    int positives = 0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (labels(i, c) == 0) continue;
      ++positives;
      ++(pie ? pie_pos : non_pos)[static_cast<std::size_t>(c)];
    }
    ++(pie ? pie_bucket : non_bucket)[static_cast<std::size_t>(std::min(positives, 4))];
  }
  for (Eigen::Index c = 0; c < classes; ++c) {
    out.class_ratio.push_back(make_ratio(pie_pos[static_cast<std::size_t>(c)], out.num_pies,
                                         non_pos[static_cast<std::size_t>(c)], out.num_non_pies));
  }
  for (std::size_t d = 0; d < 5; ++d) {
    out.count_ratio[d] = make_ratio(pie_bucket[d], out.num_pies, non_bucket[d], out.num_non_pies);
  }
  return out;
}

PieReport run_pie_analysis(const PredictionStore& store, double k_base, double k_sparse, double fraction) {
  PieReport report;
  report.agreement = per_image_agreement(store, k_base, k_sparse);
  report.flags = flag_pies(report.agreement.rho, fraction);
  report.characterization = characterize(report.flags.flags, store.labels);
  return report;
}

}  // namespace prunelab::pie
