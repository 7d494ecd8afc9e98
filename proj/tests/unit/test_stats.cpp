#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "prunelab/error.hpp"
#include "prunelab/stats.hpp"

using namespace prunelab;
using doctest::Approx;

namespace {

// Values from scipy.stats, computed before the implementation existed.
struct CdfCase {
  double x, df, expected;
};

}  // namespace

TEST_CASE("median uses the midpoint convention for even counts") {
  CHECK(stats::median(std::vector<double>{1, 3, 2}) == 2.0);
  CHECK(stats::median(std::vector<double>{1, 2, 3, 4}) == 2.5);
  CHECK_THROWS_AS(stats::median(std::vector<double>{}), InvalidArgument);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(30 + trial % 2);
    for (auto& x : v) x = g(rng);
    CHECK(stats::median(v) == oracle::median(v));
  }
}

TEST_CASE("fractional ranks average ties") {
  const auto r = stats::fractional_ranks(std::vector<double>{1, 2, 2, 3});
  CHECK(r == std::vector<double>{1, 2.5, 2.5, 4});
}

TEST_CASE("t_cdf matches reference values") {
  const CdfCase cases[] = {{2.0, 10, 0.9633059826146297},      {-1.5, 3.7, 0.10679908460100665},
                           {0.3, 1, 0.5927735790777423},       {5.0, 10000, 0.9999997084836693},
                           {-40, 2.5, 7.097817145246693e-05},  {12, 30, 0.999999999999721},
                           {-2.2, 1e4, 0.013914843163367547},  {50, 1, 0.9936346508990271}};
  for (const auto& c : cases) {
    CAPTURE(c.x);
    CAPTURE(c.df);
    CHECK(std::abs(stats::t_cdf(c.x, c.df) - c.expected) < 1e-8);
  }
  for (double df : {0.5, 1.0, 3.0, 29.0, 1e5}) {
    CHECK(stats::t_cdf(0.0, df) == Approx(0.5).epsilon(1e-15));
    for (double x : {0.1, 1.7, 8.0}) CHECK(std::abs(stats::t_cdf(x, df) + stats::t_cdf(-x, df) - 1.0) < 1e-10);
  }
  CHECK_THROWS_AS(stats::t_cdf(1.0, 0.0), InvalidArgument);
}

TEST_CASE("chi-square cdf and survival match reference values") {
  struct Case {
    double x, df, cdf, sf;
  };
  const Case cases[] = {{3, 2, 0.7768698398515702, 0.22313016014842982},
                        {10, 5, 0.9247647538534878, 0.07523524614651217},
                        {0.5, 1, 0.5204998778130466, 0.47950012218695337},
                        {100, 80, 0.935429631078867, 0.064570368921133},
                        {1e-3, 3, 8.40791905804616e-06, 0.9999915920809419},
                        {40, 10, 0.9999830552560699, 1.694474393006737e-05},
                        {7.5, 4.5, 0.8535121515105326, 0.14648784848946736}};
  for (const auto& c : cases) {
    CAPTURE(c.x);
    CHECK(std::abs(stats::chi2_cdf(c.x, c.df) - c.cdf) < 1e-8);
    CHECK(stats::chi2_sf(c.x, c.df) == Approx(c.sf).epsilon(1e-9));
  }
  CHECK(stats::chi2_cdf(0.0, 3.0) == 0.0);
  CHECK(stats::chi2_sf(0.0, 3.0) == 1.0);
}

TEST_CASE("normal quantile") {
  CHECK(stats::normal_quantile(0.7) == Approx(0.5244005127080407).epsilon(1e-12));
  CHECK(stats::normal_quantile(0.9985) == Approx(2.9677379253417944).epsilon(1e-12));
  CHECK(stats::normal_quantile(0.5) == Approx(0.0).epsilon(1e-15));
}

TEST_CASE("welch t-test") {
  SUBCASE("equal variances and sizes give the pooled df") {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
    const auto r = stats::welch_t_test(a, b);
    CHECK(r.statistic == Approx(-1.0).epsilon(1e-14));
    CHECK(r.degrees_of_freedom == Approx(8.0).epsilon(1e-14));
    CHECK(std::abs(r.p_value - 0.34659350708733416) < 1e-6);
  }
  SUBCASE("unequal sizes") {
    const std::vector<double> a{1.2, 3.4, 2.2, 5.1, 4.4, 3.3}, b{7.1, 6.2, 9.0, 8.8};
    const auto r = stats::welch_t_test(a, b);
    CHECK(std::abs(r.statistic - -5.0624460761474435) < 1e-9);
    CHECK(std::abs(r.degrees_of_freedom - 6.8176478510318095) < 1e-9);
    CHECK(std::abs(r.p_value - 0.0015794426088767007) < 1e-6);
    const auto s = stats::welch_t_test(b, a);
    CHECK(s.statistic == Approx(-r.statistic).epsilon(1e-14));
    CHECK(s.p_value == Approx(r.p_value).epsilon(1e-14));
  }
  SUBCASE("identical samples") {
    const std::vector<double> a{0.3, 0.1, 0.4, 0.9};
    const auto r = stats::welch_t_test(a, a);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == Approx(1.0));
  }
  SUBCASE("ten-sigma shift") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> a(30), b(30);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng) + 10.0;
    CHECK(stats::welch_t_test(a, b).p_value < 1e-6);
  }
  SUBCASE("degenerate and undersized input") {
    const std::vector<double> c{2, 2, 2}, d{3, 3};
    CHECK_THROWS_AS(stats::welch_t_test(c, d), DegenerateInput);
    CHECK_THROWS_AS(stats::welch_t_test(std::vector<double>{1}, d), InvalidArgument);
  }
}

TEST_CASE("kruskal-wallis") {
  SUBCASE("reference values") {
    auto r = stats::kruskal_wallis({{1, 2, 3}, {10, 11, 12}});
    CHECK(std::abs(r.statistic - 3.857142857142854) < 1e-9);
    CHECK(std::abs(r.p_value - 0.049534613435626915) < 1e-6);
    CHECK(r.p_value < 0.1);
    CHECK(r.degrees_of_freedom == 1.0);

    r = stats::kruskal_wallis({{1, 2, 2, 3, 5}, {2, 4, 4, 6}, {7, 7, 8, 1, 9, 10}});
    CHECK(std::abs(r.statistic - 5.435021097046421) < 1e-9);
    CHECK(std::abs(r.p_value - 0.06603895072565402) < 1e-6);
  }
  SUBCASE("identical groups") {
    const auto r = stats::kruskal_wallis({{1, 2, 3, 4}, {1, 2, 3, 4}});
    CHECK(r.statistic == Approx(0.0).epsilon(1e-14));
    CHECK(r.p_value == Approx(1.0));
  }
  SUBCASE("monotone transform invariance") {
    const std::vector<std::vector<double>> g{{0.2, 1.5, 3.1}, {2.2, 0.7, 4.0, 5.5}, {0.1, 0.3}};
    std::vector<std::vector<double>> t = g;
    for (auto& v : t) {
      for (auto& x : v) x = std::exp(3.0 * x) - 7.0;
    }
    CHECK(stats::kruskal_wallis(t).statistic == Approx(stats::kruskal_wallis(g).statistic).epsilon(1e-13));
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(stats::kruskal_wallis({{4, 4}, {4, 4, 4}}), DegenerateInput);
    CHECK_THROWS_AS(stats::kruskal_wallis({{1, 2, 3}}), InvalidArgument);
    CHECK_THROWS_AS(stats::kruskal_wallis({{1, 2}, {3}}), InvalidArgument);
  }
  SUBCASE("null calibration") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    int above = 0;
    for (int sim = 0; sim < 1000; ++sim) {
      std::vector<std::vector<double>> groups(3, std::vector<double>(15));
      for (auto& v : groups) {
        for (auto& x : v) x = g(rng);
      }
      if (stats::kruskal_wallis(groups).p_value > 0.3) ++above;
    }
    CHECK(above >= 300);
  }
}

TEST_CASE("ordinary least squares") {
  SUBCASE("reference fit") {
    Eigen::MatrixXd x(5, 2);
    x << 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
    Eigen::VectorXd y(5);
    y << 1.1, 1.9, 3.2, 3.9, 5.3;
    const auto f = stats::ols_fit(x, y);
    CHECK(f.coefficients(0) == Approx(-0.04).epsilon(1e-10));
    CHECK(f.coefficients(1) == Approx(1.04).epsilon(1e-12));
    CHECK(f.standard_errors(0) == Approx(0.20264912204760874).epsilon(1e-10));
    CHECK(f.standard_errors(1) == Approx(0.06110100926607786).epsilon(1e-10));
    CHECK(std::abs(f.p_values(0) - 0.8561426525669061) < 1e-6);
    CHECK(std::abs(f.p_values(1) - 4.417183997455954e-04) < 1e-6);
    CHECK(f.residual_variance == Approx(0.112 / 3.0).epsilon(1e-10));
    CHECK(f.n == 5);
    CHECK(f.p == 2);
  }
  SUBCASE("perfect line") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 1, 1, 2, 1, 3, 1, 4;
    Eigen::VectorXd y(4);
    y << 2, 4, 6, 8;
    const auto f = stats::ols_fit(x, y);
    CHECK(std::abs(f.coefficients(0)) < 1e-12);
    CHECK(f.coefficients(1) == Approx(2.0).epsilon(1e-12));
    CHECK(f.residual_variance < 1e-20);
  }
  SUBCASE("residuals orthogonal to the design") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(40, 4);
    Eigen::VectorXd y(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      x(i, 0) = 1.0;
      for (int j = 1; j < 4; ++j) x(i, j) = g(rng) * std::pow(10.0, j);
      y(i) = g(rng);
    }
    const auto f = stats::ols_fit(x, y);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(x.col(j).normalized().dot(f.residuals)) < 1e-8);
  }
  SUBCASE("rank deficiency names the dependent column") {
    Eigen::MatrixXd x(6, 3);
    for (int i = 0; i < 6; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = i;
      x(i, 2) = 2.0 * i + 1.0;
    }
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(6, 0, 1);
    try {
      stats::ols_fit(x, y);
      FAIL("expected RankDeficient");
    } catch (const RankDeficient& e) {
      CHECK(e.columns().size() == 1);
      CHECK(std::string(e.code()) == "E_RANK");
    }
  }
  SUBCASE("too few rows") {
    CHECK_THROWS_AS(stats::ols_fit(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2)), InvalidArgument);
  }
}
