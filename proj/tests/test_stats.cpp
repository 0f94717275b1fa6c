#include <cmath>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "profiler/errors.hpp"
#include "profiler/stats.hpp"

using namespace profiler;

namespace {

// direct-summation oracle: pmf as a running product, no logs
double pmf_direct(int n, double p, int k) {
  double v = 1.0;
  for (int j = 0; j < k; ++j) v *= p * static_cast<double>(n - j) / static_cast<double>(j + 1);
  for (int j = 0; j < n - k; ++j) v *= 1.0 - p;
  return v;
}

}  // namespace

TEST_CASE("binomial sanity probabilities match the published values") {
  // state rate 2.19%: no deaths in 26 cases, no deaths in 80, 15 of 381
  CHECK(stats::binomial_point_and_tail(26, 0.0219, 0).point == doctest::Approx(0.56).epsilon(0.01));
  CHECK(stats::binomial_point_and_tail(80, 0.0219, 0).point == doctest::Approx(0.17).epsilon(0.03));
  CHECK(stats::binomial_point_and_tail(381, 0.0219, 15).point ==
        doctest::Approx(0.01).epsilon(0.5));
  CHECK(std::fabs(stats::binomial_point_and_tail(26, 0.0219, 0).point - 0.56) < 0.005);
  CHECK(std::fabs(stats::binomial_point_and_tail(80, 0.0219, 0).point - 0.17) < 0.005);
  CHECK(std::fabs(stats::binomial_point_and_tail(381, 0.0219, 15).point - 0.01) < 0.005);
}

TEST_CASE("binomial tails: upper + lower - point = 1") {
  const std::vector<std::tuple<int, double, int>> cases = {
      {26, 0.0219, 0}, {381, 0.0219, 15}, {100, 0.5, 50}, {7, 0.999, 7}, {4603, 0.0219, 101}};
  for (auto [n, p, k] : cases) {
    const auto t = stats::binomial_point_and_tail(n, p, k);
    CHECK(std::fabs(t.upper + t.lower - t.point - 1.0) < 1e-12);
    CHECK(t.point >= 0.0);
    CHECK(t.upper <= 1.0);
    CHECK(t.lower <= 1.0);
  }
}

TEST_CASE("binomial utilities agree with direct summation for n <= 50") {
  for (int n : {1, 5, 17, 50}) {
    for (double p : {0.0219, 0.3, 0.5, 0.93}) {
      for (int k = 0; k <= n; k += std::max(1, n / 7)) {
        const auto t = stats::binomial_point_and_tail(n, p, k);
        CHECK(std::fabs(t.point - pmf_direct(n, p, k)) < 1e-12);
        double lo = 0.0;
        for (int j = 0; j <= k; ++j) lo += pmf_direct(n, p, j);
        CHECK(std::fabs(t.lower - lo) < 1e-12);
        double hi = 0.0;
        for (int j = k; j <= n; ++j) hi += pmf_direct(n, p, j);
        CHECK(std::fabs(t.upper - hi) < 1e-12);
      }
    }
  }
}

TEST_CASE("binomial edge cases") {
  CHECK(stats::binomial_point_and_tail(10, 0.0, 0).point == 1.0);
  CHECK(stats::binomial_point_and_tail(10, 1.0, 10).point == 1.0);
  CHECK(stats::binomial_point_and_tail(10, 0.0, 3).point == 0.0);
  CHECK_THROWS_AS((void)stats::binomial_point_and_tail(5, 0.5, 6), Error);
}

TEST_CASE("Clopper-Pearson matches the closed forms at k = 0 and k = n") {
  // k = 0: upper bound 1 - (alpha/2)^(1/n)
  const auto iv = stats::clopper_pearson(0, 26);
  CHECK(iv.lo == 0.0);
  CHECK(iv.hi == doctest::Approx(0.1322746044977542).epsilon(1e-6));
  const auto iv2 = stats::clopper_pearson(26, 26);
  CHECK(iv2.hi == 1.0);
  CHECK(iv2.lo == doctest::Approx(1.0 - 0.1322746044977542).epsilon(1e-6));
}

TEST_CASE("Clopper-Pearson endpoints put alpha/2 in each exact tail") {
  const auto iv = stats::clopper_pearson(11, 508);
  CHECK(stats::binomial_point_and_tail(508, iv.lo, 11).upper == doctest::Approx(0.025).epsilon(1e-6));
  CHECK(stats::binomial_point_and_tail(508, iv.hi, 11).lower == doctest::Approx(0.025).epsilon(1e-6));
}

TEST_CASE("normal quantile and cdf") {
  CHECK(stats::norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(stats::norm_quantile(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-12));
  CHECK(stats::norm_quantile(0.5) == 0.0);
  for (double p : {0.001, 0.025, 0.31, 0.5, 0.77, 0.9999})
    CHECK(stats::norm_cdf(stats::norm_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("expit/logit/log1pexp") {
  CHECK(stats::expit(0.0) == 0.5);
  CHECK(stats::logit(stats::expit(-3.7)) == doctest::Approx(-3.7).epsilon(1e-12));
  CHECK(stats::log1pexp(800.0) == 800.0);
  CHECK(stats::log1pexp(-800.0) == doctest::Approx(0.0));
  CHECK(stats::log1pexp(0.3) == doctest::Approx(std::log(1.0 + std::exp(0.3))).epsilon(1e-14));
}

TEST_CASE("nearest-rank percentile and type-7 quantile") {
  std::vector<double> v{0.1, 0.9, 0.5, 0.3, 0.7};
  CHECK(stats::nearest_rank_percentile(v, 90.0) == 0.9);   // ceil(0.9*5)=5th of sorted
  CHECK(stats::nearest_rank_percentile(v, 50.0) == 0.5);
  CHECK(stats::quantile(v, 0.5) == 0.5);
  CHECK(stats::median({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(2.5));
}

TEST_CASE("ks distance of uniform grid is small, of constant is large") {
  std::vector<double> grid;
  for (int i = 0; i < 1000; ++i) grid.push_back((i + 0.5) / 1000.0);
  CHECK(stats::ks_uniform(grid) < 0.01);
  CHECK(stats::ks_uniform(std::vector<double>(50, 0.5)) > 0.45);
}
