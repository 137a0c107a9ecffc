#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "tarstop/error.hpp"
#include "tarstop/estimators.hpp"

using namespace tarstop;

namespace {

double choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (std::int64_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

double enumerate_cdf(std::int64_t N, std::int64_t K, std::int64_t n, std::int64_t k) {
  double num = 0.0;
  for (std::int64_t i = 0; i <= k; ++i) num += choose(K, i) * choose(N - K, n - i);
  return num / choose(N, n);
}

}  // namespace

TEST_CASE("quant worked example") {
  const std::vector<double> rev{0.9, 0.8}, unrev{0.2, 0.1};
  const auto s = quant_sums(rev, unrev);
  CHECK(s.r_hat == doctest::Approx(1.7));
  CHECK(s.u_hat == doctest::Approx(0.3));
  CHECK(s.var_r == doctest::Approx(0.25));
  CHECK(s.var_u == doctest::Approx(0.25));
  CHECK(*quant_recall(rev, unrev) == doctest::Approx(0.85));
  const double var = 0.25 / 4.0 + 1.7 * 1.7 * 0.5 / 16.0;
  CHECK(*quant_variance(rev, unrev) == doctest::Approx(var));
  const auto ci = quant_ci(rev, unrev);
  REQUIRE(ci);
  CHECK(ci->raw_lower == doctest::Approx(0.85 - 2.0 * std::sqrt(var)));
  CHECK(ci->ci_upper == 1.0);  // 0.85 + 0.78 clamps
  CHECK(ci->raw_upper > 1.0);
  CHECK(ci->ci_lower == doctest::Approx(std::max(0.0, ci->raw_lower)));
  // Observed numerator uses the reviewed relevant count.
  CHECK(*quant_recall(rev, unrev, 2, RecallNumerator::observed) == doctest::Approx(2.0 / 2.3));
  CHECK(quant_counts(rev, unrev).u_hat == doctest::Approx(0.3));
}

TEST_CASE("quant domain handling") {
  const std::vector<double> bad{0.5, 1.0};
  CHECK_THROWS_AS(quant_sums(bad, {}), DomainError);
  CHECK_THROWS_AS(quant_sums(std::vector<double>{0.0}, {}), DomainError);
  CHECK(!quant_recall(QuantSums{}));
  CHECK(!quant_variance(QuantSums{}));
  CHECK_THROWS_AS(quant_ci(QuantSums{1, 1, 0.1, 0.1}, -1.0), ParameterError);
}

TEST_CASE("hypergeometric cdf matches enumeration") {
  CHECK(hypergeometric_cdf(10, 4, 3, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  double worst = 0.0;
  for (std::int64_t N = 0; N <= 25; ++N)
    for (std::int64_t K = 0; K <= N; ++K)
      for (std::int64_t n = 0; n <= N; ++n)
        for (std::int64_t k = -1; k <= n + 1; ++k) {
          const double want = k < 0 ? 0.0 : enumerate_cdf(N, K, n, std::min(k, n));
          worst = std::max(worst, std::abs(hypergeometric_cdf(N, K, n, k) - want));
        }
  CHECK(worst <= 1e-12);
  // Below the support the cdf is exactly 0, at its top exactly 1.
  CHECK(hypergeometric_cdf(10, 8, 5, 2) == 0.0);
  CHECK(hypergeometric_cdf(10, 8, 5, 5) == 1.0);
  CHECK_THROWS_AS(hypergeometric_cdf(10, 11, 3, 1), DomainError);
  CHECK_THROWS_AS(hypergeometric_cdf(10, 4, 11, 1), DomainError);
  CHECK_THROWS_AS(hypergeometric_cdf(-1, 0, 0, 0), DomainError);
}

TEST_CASE("knee worked example") {
  const std::vector<GainPoint> g{{0, 0}, {100, 90}, {300, 160}, {500, 210}};
  const auto k = knee_point(g, 500);
  REQUIRE(k);
  CHECK(k->knee == 100);
  CHECK(k->s == 500);
  CHECK(k->rho == doctest::Approx(0.9 * 400.0 / 121.0));
  CHECK(slope_ratio({100, 90}, {500, 210}) == doctest::Approx(0.9 * 400.0 / 121.0));
  // Truncating at s = 300 ignores later points.
  CHECK(knee_point(g, 300)->knee == 100);
}

TEST_CASE("knee point matches brute force on random curves") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GainPoint> g{{0, 0}};
    const int n = 3 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i)
      g.push_back({g.back().reviewed + 1 + static_cast<std::int64_t>(rng() % 50),
                   g.back().relevant + static_cast<std::int64_t>(rng() % 30)});
    const auto& end = g.back();
    const auto got = knee_point(g, end.reviewed);
    if (end.relevant == 0) {
      CHECK(!got);
      continue;
    }
    // Distance to the chord is proportional to |rel * s_end - s * rel_end|.
    std::size_t best = 1;
    std::int64_t best_d = -1;
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
      const std::int64_t d = std::abs(g[i].relevant * end.reviewed - g[i].reviewed * end.relevant);
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    REQUIRE(got);
    CHECK(got->knee == g[best].reviewed);
  }
}

TEST_CASE("knee input validation") {
  CHECK_THROWS_AS(knee_point(std::vector<GainPoint>{{0, 0}, {5, 1}}, 5), DomainError);
  CHECK_THROWS_AS(knee_point(std::vector<GainPoint>{{1, 0}, {5, 1}, {9, 2}}, 9), DomainError);
  CHECK_THROWS_AS(knee_point(std::vector<GainPoint>{{0, 0}, {5, 1}, {5, 2}}, 5), DomainError);
  CHECK_THROWS_AS(knee_point(std::vector<GainPoint>{{0, 0}, {5, 1}, {9, 2}}, 7), DomainError);
  CHECK(!knee_point(std::vector<GainPoint>{{0, 0}, {5, 0}, {9, 0}}, 9));
}

TEST_CASE("pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2.1, 3.9, 6.2, 8.1, 9.7};
  CHECK(*pearson_corr(x, y) > 0.99);
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 5};
  const double want = 5.5 / std::sqrt(5.0 * 8.75);
  CHECK(*pearson_corr(a, b) == doctest::Approx(want));
  CHECK(!pearson_corr(a, std::vector<double>{1, 1, 1, 1}));
  CHECK_THROWS_AS(pearson_corr(a, std::vector<double>{1, 2}), ParameterError);
  CHECK_THROWS_AS(pearson_corr(std::vector<double>{1}, std::vector<double>{1}), ParameterError);
}

TEST_CASE("quant example with a wider unreviewed tail") {
  const std::vector<double> rev{0.9, 0.8}, unrev{0.3, 0.1};
  CHECK(*quant_recall(rev, unrev) == doctest::Approx(1.7 / 2.1));
  const double bound = 0.25 / 4.41 + (2.89 / 19.4481) * 0.55;
  CHECK(*quant_variance(rev, unrev) == doctest::Approx(bound).epsilon(1e-12));
  const auto ci = quant_ci(rev, unrev);
  CHECK(ci->raw_lower == doctest::Approx(0.0654).epsilon(1e-3));
  CHECK(ci->raw_lower >= 0.05);
}

TEST_CASE("point estimate matches the mean simulated recall") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> rev, unrev;
  for (int i = 0; i < 500; ++i) {
    const double p = std::clamp(unit(rng), 0.01, 0.99);
    (unit(rng) < 0.4 ? rev : unrev).push_back(p);
  }
  double sum = 0.0, sum2 = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    int dr = 0, du = 0;
    for (double p : rev) dr += unit(rng) < p;
    for (double p : unrev) du += unit(rng) < p;
    const double x = static_cast<double>(dr) / (dr + du);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
  INFO("mean " << mean << " point " << *quant_recall(rev, unrev) << " se " << se);
  CHECK(std::abs(mean - *quant_recall(rev, unrev)) <= 3.0 * se);
}
