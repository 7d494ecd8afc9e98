#include "prunelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prunelab/error.hpp"
#include "prunelab/stats.hpp"

namespace prunelab::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InvalidArgument(std::string(what) + ": scores and labels differ in length");
  if (a == 0) throw InvalidArgument(std::string(what) + ": empty input");
}

void check_binary(std::span<const std::uint8_t> labels, const char* what) {
  if (std::any_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v > 1; })) {
    throw InvalidArgument(std::string(what) + ": labels must be 0 or 1");
  }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size(), "average_precision");
  check_binary(labels, "average_precision");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) throw DegenerateInput("average precision undefined: no positive labels");
  return sum / static_cast<double>(hits);
}

double average_precision(const ScoredLabels& sl) { return average_precision(sl.scores, sl.labels); }

MeanApResult mean_ap(const std::vector<ScoredLabels>& per_class, const std::vector<std::string>& names) {
  MeanApResult out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& sl = per_class[c];
    const bool has_pos = std::any_of(sl.labels.begin(), sl.labels.end(), [](std::uint8_t v) { return v != 0; });
    if (!has_pos) {
      out.per_class.push_back(std::nan(""));
      out.excluded.push_back(c < names.size() ? names[c] : std::to_string(c));
      continue;
    }
    const double ap = average_precision(sl);
    out.per_class.push_back(ap);
    sum += ap;
    ++used;
  }
  if (used == 0) throw DegenerateInput("mean AP undefined: no class has a positive label");
  out.mean_ap = sum / static_cast<double>(used);
  return out;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size(), "auroc");
  check_binary(labels, "auroc");
  const auto ranks = stats::fractional_ranks(scores);
  double pos_rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] != 0) {
      pos_rank_sum += ranks[i];
      n_pos += 1.0;
    }
  }
  const double n_neg = static_cast<double>(ranks.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw DegenerateInput("AUROC undefined: labels contain a single class");
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double auroc(const ScoredLabels& sl) { return auroc(sl.scores, sl.labels); }

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: inputs differ in length");
  if (x.size() < 3) throw InvalidArgument("pearson: needs at least three points");
  const double mx = stats::mean(x);
  const double my = stats::mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("correlation undefined: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: inputs differ in length");
  const auto rx = stats::fractional_ranks(x);
  const auto ry = stats::fractional_ranks(y);
  SpearmanResult out;
  out.rho = pearson(rx, ry);
  const double n = static_cast<double>(x.size());
  out.small_sample = x.size() < 10;
  const double one_minus = 1.0 - out.rho * out.rho;
  if (one_minus <= 1e-14) {
    out.p_value = 0.0;
  } else {
    const double t = out.rho * std::sqrt((n - 2.0) / one_minus);
    out.p_value = stats::t_two_sided_p(t, n - 2.0);
  }
  return out;
}

}  // namespace prunelab::metrics
