#include "prunelab/analysis.hpp"

#include <cmath>
#include <sstream>

#include "prunelab/error.hpp"

namespace prunelab::analysis {

namespace {

template <typename F>
auto optional_stat(F&& f) -> std::optional<decltype(f())> {
  try {
    return f();
  } catch (const DegenerateInput&) {
    return std::nullopt;
  }
}

}  // namespace

ApTensor ap_tensor(const PredictionStore& store) {
  const auto runs = store.ok_runs();
  if (runs.empty()) throw InvalidArgument("ap_tensor: store has no successful runs");

  ApTensor ap;
  ap.runs = runs.size();
  ap.sparsities = store.num_sparsities();
  for (Eigen::Index c = 0; c < store.classes; ++c) {
    if ((store.labels.col(c).array() != 0).any()) {
      ap.class_index.push_back(static_cast<std::size_t>(c));
      ap.class_names.push_back(store.class_names[static_cast<std::size_t>(c)]);
    } else {
      ap.excluded.push_back(store.class_names[static_cast<std::size_t>(c)]);
    }
  }
  if (ap.class_index.empty()) throw DegenerateInput("ap_tensor: no class has a test positive");
  ap.values.resize(ap.runs * ap.sparsities * ap.num_classes());

  const auto n = static_cast<std::size_t>(store.images);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t ci = 0; ci < ap.num_classes(); ++ci) {
    const auto c = static_cast<Eigen::Index>(ap.class_index[ci]);
    for (std::size_t i = 0; i < n; ++i) labels[i] = store.labels(static_cast<Eigen::Index>(i), c);
    for (std::size_t ri = 0; ri < ap.runs; ++ri) {
      for (std::size_t k = 0; k < ap.sparsities; ++k) {
        const auto slab = store.slab(runs[ri], k);
        for (std::size_t i = 0; i < n; ++i) scores[i] = slab[i * static_cast<std::size_t>(store.classes) + static_cast<std::size_t>(c)];
        ap.at(ri, k, ci) = metrics::average_precision(scores, labels);
      }
    }
  }
  return ap;
}

CurveSet forgettability_curves(const ApTensor& ap) {
  CurveSet out;
  std::vector<double> rel(ap.runs);
  for (std::size_t c = 0; c < ap.num_classes(); ++c) {
    bool zero_baseline = false;
    for (std::size_t r = 0; r < ap.runs; ++r) zero_baseline = zero_baseline || ap.at(r, 0, c) == 0.0;
    if (zero_baseline) {
      out.excluded.push_back(ap.class_names[c]);
      continue;
    }
    ForgettabilityCurve curve;
    curve.class_index = ap.class_index[c];
    curve.class_name = ap.class_names[c];
    curve.values.resize(ap.sparsities);
    for (std::size_t k = 0; k < ap.sparsities; ++k) {
      for (std::size_t r = 0; r < ap.runs; ++r) {
        const double base = ap.at(r, 0, c);
        rel[r] = (ap.at(r, k, c) - base) / base;
      }
      curve.values[k] = stats::median(rel);
    }
    out.curves.push_back(std::move(curve));
  }
  return out;
}

OverallDrop overall_drop_analysis(const ApTensor& ap, const pruning::SparsityGrid& grid) {
  if (ap.runs < 2) throw InvalidArgument("overall_drop_analysis needs at least two runs");
  if (grid.size() != ap.sparsities) throw InvalidArgument("overall_drop_analysis: grid does not match AP tensor");

  std::vector<std::vector<double>> mean_ap(ap.sparsities, std::vector<double>(ap.runs));
  for (std::size_t k = 0; k < ap.sparsities; ++k) {
    for (std::size_t r = 0; r < ap.runs; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < ap.num_classes(); ++c) s += ap.at(r, k, c);
      mean_ap[k][r] = s / static_cast<double>(ap.num_classes());
    }
  }

  OverallDrop out;
  const double base_median = stats::median(mean_ap[0]);
  for (std::size_t k = 0; k < ap.sparsities; ++k) {
    OverallRow row;
    row.k = grid[k];
    row.median_mean_ap = stats::median(mean_ap[k]);
    try {
      row.welch = stats::welch_t_test(mean_ap[0], mean_ap[k]);
    } catch (const DegenerateInput&) {
      row.degenerate = true;
      const double diff = stats::mean(mean_ap[0]) - stats::mean(mean_ap[k]);
      row.welch.statistic = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
      row.welch.degrees_of_freedom = 2.0 * static_cast<double>(ap.runs) - 2.0;
      row.welch.p_value = diff == 0.0 ? 1.0 : 0.0;
    }
    if (!out.first_significant_k && row.welch.p_value < kSignificance && row.median_mean_ap < base_median) {
      out.first_significant_k = row.k;
    }
    out.rows.push_back(row);
  }
  return out;
}

double fcd(const ForgettabilityCurve& a, const ForgettabilityCurve& b) {
  if (a.values.size() != b.values.size() || a.values.empty()) throw InvalidArgument("fcd: curves are on different grids");
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double d = a.values[k] - b.values[k];
    s += d * d;
  }
  return s / static_cast<double>(a.values.size());
}

std::optional<double> first_drop_sparsity(const ForgettabilityCurve& curve, const pruning::SparsityGrid& grid,
                                          double threshold) {
  if (curve.values.size() != grid.size()) throw InvalidArgument("first_drop_sparsity: curve does not match grid");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] > 0.0 && curve.values[k] <= -threshold) return grid[k];
  }
  return std::nullopt;
}

double tail_impact(const ForgettabilityCurve& curve, const pruning::SparsityGrid& grid) {
  if (curve.values.size() != grid.size()) throw InvalidArgument("tail_impact: curve does not match grid");
  const auto idx = grid.index_of(kTailSparsity);
  if (!idx) {
    std::ostringstream msg;
    msg << "tail_impact: grid {";
    for (std::size_t i = 0; i < grid.size(); ++i) msg << (i ? ", " : "") << grid[i];
    msg << "} does not contain 0.95";
    throw InvalidArgument(msg.str());
  }
  return curve.values[*idx];
}

FrequencyCorrelations frequency_correlations(const CurveSet& curves, const pruning::SparsityGrid& grid,
                                             const std::vector<double>& train_frequencies) {
  FrequencyCorrelations out;
  std::vector<double> first_excl, logf_excl;
  for (const auto& curve : curves.curves) {
    if (curve.class_index >= train_frequencies.size()) throw InvalidArgument("frequency_correlations: missing train frequency");
    const double f = train_frequencies[curve.class_index];
    if (!(f > 0.0)) continue;
    out.log_train_frequency.push_back(std::log(f));
    const auto drop = first_drop_sparsity(curve, grid);
    out.first_drop.push_back(drop.value_or(kNeverDropped));
    if (drop) {
      first_excl.push_back(*drop);
      logf_excl.push_back(std::log(f));
    } else {
      ++out.never_crossed;
    }
  }
  out.num_classes = out.first_drop.size();
  if (out.num_classes < 5) {
    throw InvalidArgument("frequency_correlations needs at least five classes with defined statistics, got " +
                          std::to_string(out.num_classes));
  }

  // A constant first-drop column (e.g. no class ever drops) leaves rho undefined; report it as 0 with p = 1.
  out.first_drop_rho = optional_stat([&] { return metrics::spearman(out.log_train_frequency, out.first_drop); })
                           .value_or(metrics::SpearmanResult{0.0, 1.0, out.num_classes < 10});
  if (first_excl.size() >= 3) {
    out.first_drop_rho_excluding = optional_stat([&] { return metrics::spearman(logf_excl, first_excl); });
  }
  if (grid.index_of(kTailSparsity)) {
    for (const auto& curve : curves.curves) {
      if (train_frequencies[curve.class_index] > 0.0) out.tail.push_back(tail_impact(curve, grid));
    }
    out.tail_rho = optional_stat([&] { return metrics::spearman(out.log_train_frequency, out.tail); });
  }
  return out;
}

std::vector<PairRecord> pair_table(const CurveSet& curves, const std::vector<std::int64_t>& test_counts,
                                   const Eigen::MatrixXd& iou) {
  std::vector<const ForgettabilityCurve*> usable;
  for (const auto& c : curves.curves) {
    if (c.class_index >= test_counts.size()) throw InvalidArgument("pair_table: missing test count");
    if (test_counts[c.class_index] > 0) usable.push_back(&c);
  }
  if (usable.size() < 2) throw InvalidArgument("pair_table needs at least two classes");
  std::vector<PairRecord> out;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      const auto& a = *usable[i];
      const auto& b = *usable[j];
      PairRecord rec;
      rec.class_a = a.class_index;
      rec.class_b = b.class_index;
      rec.name_a = a.class_name;
      rec.name_b = b.class_name;
      rec.fcd = fcd(a, b);
      rec.abs_log_freq_diff = std::abs(std::log(static_cast<double>(test_counts[a.class_index])) -
                                       std::log(static_cast<double>(test_counts[b.class_index])));
      rec.iou_quarter = std::pow(iou(static_cast<Eigen::Index>(a.class_index), static_cast<Eigen::Index>(b.class_index)), 0.25);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

PairRegression pair_regression(const std::vector<PairRecord>& pairs) {
  if (pairs.size() < 5) throw InvalidArgument("pair_regression needs at least five pairs");
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd response(n);
  std::vector<double> y(pairs.size()), lfd(pairs.size()), iouq(pairs.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design(i, 1) = p.abs_log_freq_diff;
    design(i, 2) = p.iou_quarter;
    design(i, 3) = p.abs_log_freq_diff * p.iou_quarter;
    response(i) = p.fcd;
    y[static_cast<std::size_t>(i)] = p.fcd;
    lfd[static_cast<std::size_t>(i)] = p.abs_log_freq_diff;
    iouq[static_cast<std::size_t>(i)] = p.iou_quarter;
  }

  PairRegression out;
  try {
    out.fit = stats::ols_fit(design, response);
  } catch (const RankDeficient& e) {
    std::string msg = "pair_regression: collinear design columns:";
    for (long col : e.columns()) msg += std::string(" ") + PairRegression::kTerms[static_cast<std::size_t>(col)];
    throw RankDeficient(msg, e.columns());
  }
  out.rho_log_freq_diff = optional_stat([&] { return metrics::spearman(lfd, y); });
  out.rho_iou_quarter = optional_stat([&] { return metrics::spearman(iouq, y); });
  out.pearson_log_freq_diff = optional_stat([&] { return metrics::pearson(lfd, y); });
  out.pearson_iou_quarter = optional_stat([&] { return metrics::pearson(iouq, y); });
  return out;
}

double predict_fcd(const Eigen::Vector4d& b, double abs_log_freq_diff, double iou_quarter) {
  return b(0) + b(1) * abs_log_freq_diff + b(2) * iou_quarter + b(3) * abs_log_freq_diff * iou_quarter;
}

}  // namespace prunelab::analysis
