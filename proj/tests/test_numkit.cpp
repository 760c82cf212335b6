#include "qrmlab/numkit.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "oracle.hpp"

using namespace qrmlab::numkit;

TEST_CASE("normal cdf: center, symmetry, tabulated point") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  // 97.5% point of the standard normal, checked against quadrature.
  CHECK(std_normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
  for (double x : {0.3, 1.7, 4.0}) {
    CHECK(std_normal_cdf(-x) ==
          doctest::Approx(1.0 - std_normal_cdf(x)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(std_normal_cdf(std::nan("")), std::domain_error);
  CHECK_THROWS_AS(std_normal_cdf(INFINITY), std::domain_error);
}

TEST_CASE("normal cdf matches quadrature to 1e-12") {
  for (double x = -8.0; x <= 8.0; x += 0.37) {
    CHECK(std::abs(std_normal_cdf(x) - oracle::normal_cdf_by_quadrature(x)) <=
          1e-12);
  }
}

TEST_CASE("normal cdf is monotone on a dense grid") {
  double prev = std_normal_cdf(-12.0);
  for (int i = 1; i <= 10000; ++i) {
    const double x = -12.0 + 24.0 * i / 10000.0;
    const double cur = std_normal_cdf(x);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("inverse normal cdf: median, round trip, extreme levels") {
  CHECK(std_normal_icdf(0.5) == 0.0);
  CHECK(std_normal_icdf(std_normal_cdf(1.3)) == doctest::Approx(1.3).epsilon(1e-8));
  // ln(1-alpha) = -1000 lands on the asymptotic branch: sqrt(2000).
  const double q = std_normal_icdf(AlphaLevel::log_one_minus(-1000.0));
  CHECK(q == doctest::Approx(std::sqrt(2000.0)).epsilon(1e-12));
  CHECK(q == doctest::Approx(44.72136).epsilon(1e-6));
  CHECK_THROWS_AS(std_normal_icdf(0.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_icdf(1.0), std::domain_error);
  CHECK_THROWS_AS((void)std_normal_icdf(AlphaLevel::log_one_minus(0.0)),
                  std::domain_error);
}

TEST_CASE("inverse normal cdf: relative error vs bisection oracle") {
  for (double alpha : {0.001, 0.0263, 0.3, 0.62, 0.9, 0.999999}) {
    const double expected = oracle::normal_icdf_by_bisection(alpha);
    const double got = std_normal_icdf(alpha);
    CHECK(std::abs(got - expected) <= 1e-9 * std::max(std::abs(expected), 1e-3));
  }
}

TEST_CASE("inverse consistency over [1e-6, 1-1e-6]") {
  std::vector<double> alphas;
  for (int k = -6; k <= -1; ++k) {
    alphas.push_back(std::pow(10.0, k));
    alphas.push_back(1.0 - std::pow(10.0, k));
  }
  for (int i = 1; i < 40; ++i) alphas.push_back(i / 40.0);
  for (double a : alphas) {
    CHECK(std::abs(std_normal_cdf(std_normal_icdf(a)) - a) <= 1e-8);
  }
}

TEST_CASE("asymptotic branch agrees within 2% at the switchover") {
  const double at_switch = kIcdfAsymptoticSwitch;
  const double asymptotic = std::sqrt(-2.0 * at_switch);
  // Nudged inside the rational branch.
  const double rational =
      std_normal_icdf(AlphaLevel::log_one_minus(at_switch + 1e-9));
  CHECK(std::abs(asymptotic - rational) / rational <= 0.02);
  // And the branch actually switches.
  CHECK(std_normal_icdf(AlphaLevel::log_one_minus(at_switch - 1e-9)) ==
        doctest::Approx(asymptotic).epsilon(1e-6));
}

TEST_CASE("log survival function matches erfc region and far tail") {
  for (double x : {0.0, 1.0, 5.0, 20.0, 35.9}) {
    CHECK(std_normal_log_sf(x) ==
          doctest::Approx(std::log(0.5 * std::erfc(x * M_SQRT1_2))).epsilon(1e-12));
  }
  // Continuity across the series switch at x = 36.
  CHECK(std_normal_log_sf(36.0 + 1e-9) ==
        doctest::Approx(std_normal_log_sf(36.0 - 1e-9)).epsilon(1e-9));
}

TEST_CASE("alpha level representations") {
  CHECK(AlphaLevel::probability(0.9).log_one_minus_alpha() ==
        doctest::Approx(std::log1p(-0.9)).epsilon(1e-15));
  CHECK(AlphaLevel::log_one_minus(-2.0).alpha() ==
        doctest::Approx(-std::expm1(-2.0)).epsilon(1e-15));
  CHECK(AlphaLevel::probability(1.0).alpha() == 1.0);
  CHECK_THROWS_AS(AlphaLevel::probability(1.5), std::domain_error);
  CHECK_THROWS_AS(AlphaLevel::probability(-0.1), std::domain_error);
  CHECK_THROWS_AS(AlphaLevel::log_one_minus(0.5), std::domain_error);
}

TEST_CASE("rng streams reproduce and separate") {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool all_equal = true;
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100000; ++i) {
    const auto va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    differs_c = differs_c || va != c.next_u64();
    differs_d = differs_d || va != d.next_u64();
  }
  CHECK(all_equal);
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("uniform01 stays inside the open interval") {
  RngStream rng(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("samplers: degenerate and moment checks") {
  RngStream rng(5, 1);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_normal(rng, 3.25, 0.0) == 3.25);
    CHECK(sample_bernoulli(rng, 1.0));
    CHECK(!sample_bernoulli(rng, 0.0));
  }
  CHECK_THROWS_AS(sample_normal(rng, 0.0, -1.0), std::domain_error);
  CHECK_THROWS_AS(sample_bernoulli(rng, 1.5), std::domain_error);

  // LogNormal(0, 0.5) has mean e^{0.125}.
  RngStream rng2(99, 0);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc += sample_lognormal(rng2, 0.0, 0.5);
  CHECK(acc / n == doctest::Approx(std::exp(0.125)).epsilon(0.005 / 1.133));
}

TEST_CASE("normal sampler first two moments") {
  RngStream rng(1234, 3);
  double s1 = 0.0, s2 = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(s1 / n == doctest::Approx(0.0).epsilon(1.0).scale(0.005));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("summary stats") {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto s = summary_stats(v);
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.sample_std == doctest::Approx(1.0));
  CHECK(s.median == doctest::Approx(2.0));

  const std::vector<double> c{4.2, 4.2, 4.2};
  const auto sc = summary_stats(c);
  CHECK(sc.sample_std == 0.0);
  CHECK(sc.median_pairwise_distance == 0.0);
  CHECK(sc.iqr == 0.0);

  // pairwise distances {1, 3, 2}, median 2
  const std::vector<double> p{0.0, 1.0, 3.0};
  CHECK(summary_stats(p).median_pairwise_distance == doctest::Approx(2.0));

  CHECK_THROWS_AS(summary_stats(std::vector<double>{}), std::domain_error);
  CHECK_THROWS_AS(summary_stats(std::vector<double>{1.0, std::nan("")}),
                  std::domain_error);
}

TEST_CASE("type-7 quantiles interpolate linearly") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(sorted_quantile_type7(v, 0.0) == 1.0);
  CHECK(sorted_quantile_type7(v, 1.0) == 4.0);
  CHECK(sorted_quantile_type7(v, 0.5) == doctest::Approx(2.5));
  CHECK(sorted_quantile_type7(v, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("seed derivation separates tags") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t tag = 0; tag < 1000; ++tag) {
    seen.insert(mix_seed(7, tag));
  }
  CHECK(seen.size() == 1000);
  CHECK(hash64("fig2a-frontier") != hash64("fig2c-coefficients"));
}
