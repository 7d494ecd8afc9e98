#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "prunelab/analysis.hpp"
#include "prunelab/error.hpp"

using namespace prunelab;
using doctest::Approx;

namespace {

analysis::ForgettabilityCurve curve(std::vector<double> v, std::size_t idx = 0) {
  analysis::ForgettabilityCurve c;
  c.class_index = idx;
  c.class_name = "c" + std::to_string(idx);
  c.values = std::move(v);
  return c;
}

// R runs x K sparsities x C classes with explicit AP values.
analysis::ApTensor tensor(std::size_t runs, std::size_t ks, std::size_t classes) {
  analysis::ApTensor t;
  t.runs = runs;
  t.sparsities = ks;
  for (std::size_t c = 0; c < classes; ++c) {
    t.class_index.push_back(c);
    t.class_names.push_back("c" + std::to_string(c));
  }
  t.values.assign(runs * ks * classes, 0.5);
  return t;
}

PredictionStore random_store(int runs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  LabelMatrix labels(40, 4);
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = u(rng) < 0.3;
  labels.col(3).setZero();  // no positives: excluded
  labels(0, 0) = labels(1, 1) = labels(2, 2) = 1;
  auto s = PredictionStore::allocate(runs, pruning::SparsityGrid::parse("0,0.5"), labels, {"a", "b", "c", "d"});
  for (auto& p : s.probs) p = u(rng);
  return s;
}

}  // namespace

TEST_CASE("AP tensor") {
  LabelMatrix labels(4, 1);
  labels << 1, 0, 1, 0;
  auto s = PredictionStore::allocate(1, pruning::SparsityGrid(), labels, {"x"});
  const double scores[] = {0.9, 0.8, 0.7, 0.6};
  std::copy(std::begin(scores), std::end(scores), s.probs.begin());
  const auto ap = analysis::ap_tensor(s);
  CHECK(ap.at(0, 0, 0) == Approx((1.0 + 2.0 / 3.0) / 2.0));

  SUBCASE("classes without positives are excluded by name") {
    const auto t = analysis::ap_tensor(random_store(2, 1));
    CHECK(t.num_classes() == 3);
    CHECK(t.excluded == std::vector<std::string>{"d"});
  }
  SUBCASE("image permutation leaves AP unchanged") {
    const auto a = random_store(2, 2);
    auto b = a;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(a.images));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    for (Eigen::Index i = 0; i < a.images; ++i) {
      b.labels.row(i) = a.labels.row(perm[static_cast<std::size_t>(i)]);
      for (int r = 0; r < a.runs; ++r) {
        for (std::size_t k = 0; k < a.grid.size(); ++k) {
          for (Eigen::Index c = 0; c < a.classes; ++c) {
            b.slab(r, k)[static_cast<std::size_t>(i * a.classes + c)] = a.at(r, k, perm[static_cast<std::size_t>(i)], c);
          }
        }
      }
    }
    // Scores are continuous, so no ties: AP is permutation invariant.
    CHECK(analysis::ap_tensor(a).values == analysis::ap_tensor(b).values);
  }
  SUBCASE("failed runs are skipped") {
    auto st = random_store(3, 3);
    st.run_status[1].ok = false;
    CHECK(analysis::ap_tensor(st).runs == 2);
  }
}

TEST_CASE("forgettability curves") {
  SUBCASE("hand arithmetic with an even run count") {
    auto t = tensor(2, 2, 1);
    t.at(0, 1, 0) = 0.5;
    t.at(1, 1, 0) = 0.3;
    const auto cs = analysis::forgettability_curves(t);
    REQUIRE(cs.curves.size() == 1);
    CHECK(cs.curves[0].values[0] == 0.0);
    CHECK(cs.curves[0].values[1] == Approx(-0.2).epsilon(1e-15));
  }
  SUBCASE("constant AP gives a zero curve; common scaling changes nothing") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    auto t = tensor(5, 4, 3);
    for (auto& v : t.values) v = u(rng);
    auto scaled = t;
    for (auto& v : scaled.values) v *= 0.37;
    const auto a = analysis::forgettability_curves(t);
    const auto b = analysis::forgettability_curves(scaled);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(a.curves[c].values[0] == 0.0);
      for (std::size_t k = 0; k < 4; ++k) CHECK(a.curves[c].values[k] == Approx(b.curves[c].values[k]).epsilon(1e-12));
    }
    const auto flat = analysis::forgettability_curves(tensor(3, 4, 2));
    for (const auto& c : flat.curves) CHECK(std::all_of(c.values.begin(), c.values.end(), [](double v) { return v == 0.0; }));
  }
  SUBCASE("duplicated runs leave medians unchanged") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    auto t = tensor(3, 3, 2);
    for (auto& v : t.values) v = u(rng);
    auto d = tensor(6, 3, 2);
    std::copy(t.values.begin(), t.values.end(), d.values.begin());
    std::copy(t.values.begin(), t.values.end(), d.values.begin() + static_cast<long>(t.values.size()));
    const auto a = analysis::forgettability_curves(t);
    const auto b = analysis::forgettability_curves(d);
    for (std::size_t c = 0; c < 2; ++c) CHECK(a.curves[c].values == b.curves[c].values);
  }
  SUBCASE("zero baseline excludes the class") {
    auto t = tensor(2, 2, 2);
    t.at(1, 0, 1) = 0.0;
    const auto cs = analysis::forgettability_curves(t);
    CHECK(cs.curves.size() == 1);
    CHECK(cs.excluded == std::vector<std::string>{"c1"});
  }
}

TEST_CASE("overall drop") {
  const auto grid = pruning::SparsityGrid::parse("0,0.5,0.9");
  SUBCASE("identical samples are never significant") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    auto t = tensor(10, 3, 2);
    for (std::size_t r = 0; r < 10; ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        const double v = u(rng);
        for (std::size_t k = 0; k < 3; ++k) t.at(r, k, c) = v;
      }
    }
    const auto o = analysis::overall_drop_analysis(t, grid);
    CHECK_FALSE(o.first_significant_k.has_value());
    for (const auto& row : o.rows) CHECK(row.welch.p_value == Approx(1.0));
  }
  SUBCASE("constant shift of 0.2 at R = 30") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.5, 0.9);
    auto t = tensor(30, 3, 1);
    for (std::size_t r = 0; r < 30; ++r) {
      const double v = u(rng);
      t.at(r, 0, 0) = v;
      t.at(r, 1, 0) = v;
      t.at(r, 2, 0) = v - 0.2;
    }
    const auto o = analysis::overall_drop_analysis(t, grid);
    CHECK(o.rows[2].welch.p_value < 0.001);
    CHECK(o.first_significant_k.value() == 0.9);
  }
  SUBCASE("a significant rise is not a drop") {
    auto t = tensor(4, 3, 1);
    const double base[] = {0.5, 0.51, 0.52, 0.49};
    for (std::size_t r = 0; r < 4; ++r) {
      t.at(r, 0, 0) = base[r];
      t.at(r, 1, 0) = base[r] + 0.3;
      t.at(r, 2, 0) = base[r];
    }
    CHECK_FALSE(analysis::overall_drop_analysis(t, grid).first_significant_k.has_value());
  }
  CHECK_THROWS_AS(analysis::overall_drop_analysis(tensor(1, 3, 1), grid), InvalidArgument);
}

TEST_CASE("curve distances and summaries") {
  const auto a = curve({0, 0, -1});
  const auto b = curve({0, 0, 0});
  CHECK(analysis::fcd(a, b) == Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(analysis::fcd(a, b) == analysis::fcd(b, a));
  CHECK(analysis::fcd(a, a) == 0.0);
  CHECK_THROWS_AS(analysis::fcd(a, curve({0, 0})), InvalidArgument);

  const auto grid = pruning::SparsityGrid::parse("0,0.3,0.6,0.9");
  CHECK(analysis::first_drop_sparsity(curve({0, -0.1, -0.25, -0.5}), grid).value() == 0.6);
  CHECK_FALSE(analysis::first_drop_sparsity(curve({0, -0.1, -0.15, -0.19}), grid).has_value());
  CHECK(analysis::first_drop_sparsity(curve({0, 0.0, -0.01, -0.5}), grid, 0.0).value() == 0.3);

  const auto std_grid = pruning::SparsityGrid::standard();
  std::vector<double> v(20, 0.0);
  CHECK(analysis::tail_impact(curve(v), std_grid) == 0.0);
  v.back() = -0.8;
  CHECK(analysis::tail_impact(curve(v), std_grid) == -0.8);
  try {
    analysis::tail_impact(curve({0, 0, 0, 0}), grid);
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("0.9") != std::string::npos);
  }
}

TEST_CASE("frequency correlations") {
  const auto grid = pruning::SparsityGrid::standard();
  // Class c drops past -0.2 at grid index 2 + 2c and has frequency rising with c.
  analysis::CurveSet cs;
  std::vector<double> freq;
  for (std::size_t c = 0; c < 7; ++c) {
    std::vector<double> v(20, 0.0);
    for (std::size_t k = 2 + 2 * c; k < 20; ++k) v[k] = -0.3 - 0.01 * static_cast<double>(k);
    v[19] = -0.9 + 0.1 * static_cast<double>(c);
    cs.curves.push_back(curve(v, c));
    freq.push_back(0.001 * std::pow(2.0, static_cast<double>(c)));
  }
  const auto fc = analysis::frequency_correlations(cs, grid, freq);
  CHECK(fc.first_drop_rho.rho == Approx(1.0));
  REQUIRE(fc.tail_rho.has_value());
  CHECK(fc.tail_rho->rho == Approx(1.0));
  CHECK(fc.never_crossed == 0);
  CHECK(fc.log_train_frequency[0] == Approx(std::log(0.001)));

  SUBCASE("never-crossing classes get one step past the grid") {
    cs.curves[6].values.assign(20, 0.0);
    const auto f2 = analysis::frequency_correlations(cs, grid, freq);
    CHECK(f2.never_crossed == 1);
    CHECK(f2.first_drop[6] == analysis::kNeverDropped);
    CHECK(f2.first_drop_rho.rho == Approx(1.0));
    REQUIRE(f2.first_drop_rho_excluding.has_value());
    CHECK(f2.first_drop_rho_excluding->rho == Approx(1.0));
  }
  SUBCASE("shuffled frequencies give small correlations on average") {
    std::mt19937_64 rng(77);
    analysis::CurveSet many;
    std::vector<double> f;
    for (std::size_t c = 0; c < 20; ++c) {
      std::vector<double> v(20, 0.0);
      v[19] = -0.05 * static_cast<double>(c);
      many.curves.push_back(curve(v, c));
      f.push_back(0.01 * static_cast<double>(c + 1));
    }
    double sum = 0.0;
    for (int s = 0; s < 100; ++s) {
      std::shuffle(f.begin(), f.end(), rng);
      sum += std::abs(analysis::frequency_correlations(many, grid, f).tail_rho->rho);
    }
    CHECK(sum / 100.0 < 0.3);
  }
  SUBCASE("too few classes") {
    cs.curves.resize(4);
    CHECK_THROWS_AS(analysis::frequency_correlations(cs, grid, freq), InvalidArgument);
  }
  SUBCASE("no tail sparsity in the grid") {
    analysis::CurveSet shortcs;
    for (std::size_t c = 0; c < 5; ++c) shortcs.curves.push_back(curve({0, -0.1 * static_cast<double>(c)}, c));
    const auto f3 = analysis::frequency_correlations(shortcs, pruning::SparsityGrid::parse("0,0.5"), freq);
    CHECK_FALSE(f3.tail_rho.has_value());
    CHECK(f3.tail.empty());
  }
}

TEST_CASE("pair table") {
  analysis::CurveSet cs;
  cs.curves = {curve({0, -0.1, -0.2}, 0), curve({0, -0.1, -0.2}, 1), curve({0, -0.5, -0.9}, 2), curve({0, 0, 0}, 3)};
  Eigen::MatrixXd iou = Eigen::MatrixXd::Identity(4, 4);
  iou(0, 1) = iou(1, 0) = 0.0625;
  const std::vector<std::int64_t> counts{50, 50, 5, 0};
  const auto pairs = analysis::pair_table(cs, counts, iou);
  REQUIRE(pairs.size() == 3);  // class 3 has no test positives
  CHECK(pairs[0].fcd == 0.0);
  CHECK(pairs[0].abs_log_freq_diff == 0.0);
  CHECK(pairs[0].iou_quarter == Approx(0.5));
  CHECK(pairs[1].abs_log_freq_diff == Approx(std::log(10.0)));

  analysis::CurveSet five;
  for (std::size_t c = 0; c < 5; ++c) five.curves.push_back(curve({0, -0.1 * static_cast<double>(c)}, c));
  CHECK(analysis::pair_table(five, {1, 2, 3, 4, 5}, Eigen::MatrixXd::Identity(5, 5)).size() == 10);
}

TEST_CASE("pair regression recovers the interaction model from noiseless data") {
  const Eigen::Vector4d beta(0.27, 0.21, -0.05, -0.31);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lfd(0.0, 5.0), iq(0.0, 0.8);
  std::vector<analysis::PairRecord> pairs(60);
  for (auto& p : pairs) {
    p.abs_log_freq_diff = lfd(rng);
    p.iou_quarter = iq(rng);
    p.fcd = analysis::predict_fcd(beta, p.abs_log_freq_diff, p.iou_quarter);
  }
  const auto r = analysis::pair_regression(pairs);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(r.fit.coefficients(i) - beta(i)) < 1e-6);
  CHECK(r.rho_log_freq_diff.has_value());

  CHECK(analysis::predict_fcd(beta, 2.04, 0.37) == Approx(0.446).epsilon(1e-3));

  SUBCASE("constant IoU is rank deficient and names the terms") {
    for (auto& p : pairs) p.iou_quarter = 0.3;
    try {
      analysis::pair_regression(pairs);
      FAIL("expected rank deficiency");
    } catch (const RankDeficient& e) {
      const std::string msg = e.what();
      CHECK((msg.find("iou_quarter") != std::string::npos || msg.find("intercept") != std::string::npos));
    }
  }
  SUBCASE("too few pairs") {
    pairs.resize(4);
    CHECK_THROWS_AS(analysis::pair_regression(pairs), InvalidArgument);
  }
}
