#include "qrmlab/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "oracle.hpp"
#include "qrmlab/csv.hpp"

using namespace qrmlab;
using namespace qrmlab::evalkit;
using qrmlab::numkit::AlphaLevel;
using qrmlab::riskdist::RiskVector;

TEST_CASE("quantile report: extremes, constants, order statistics") {
  std::vector<double> decile;
  for (int i = 1; i <= 10; ++i) decile.push_back(0.1 * i);
  const auto report = quantile_report(RiskVector(decile));
  CHECK(report.quantiles.at(1.0) == doctest::Approx(1.0));
  CHECK(report.quantiles.at(0.0) == doctest::Approx(0.1));
  CHECK(report.mean_risk == doctest::Approx(0.55));

  const auto flat = quantile_report(RiskVector({2.0, 2.0, 2.0}));
  for (const auto& [level, q] : flat.quantiles) CHECK(q == doctest::Approx(2.0));
  CHECK(flat.invariance_residual == 0.0);

  const double levels[] = {0.5};
  const auto mid = quantile_report(RiskVector({1, 2, 3, 4}), levels);
  CHECK(mid.quantiles.at(0.5) == 2.0);
}

TEST_CASE("report internal consistency on random fixtures") {
  numkit::RngStream rng(17, 0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> risks(3 + static_cast<std::size_t>(rng.uniform01() * 20));
    for (auto& r : risks) r = 5.0 * rng.uniform01();
    const auto report = quantile_report(RiskVector(risks));
    double prev = -1e300;
    for (const auto& [level, q] : report.quantiles) {
      CHECK(q >= prev);
      prev = q;
      CHECK(report.cvar.at(level) >= q - 1e-12);
    }
  }
}

TEST_CASE("coverage: boundary and monotonicity") {
  const std::vector<double> risks{1.0, 2.0, 3.0, 4.0};
  CHECK(coverage(risks, 0.5) == 0.0);
  CHECK(coverage(risks, 4.0) == 1.0);
  CHECK(coverage(risks, 2.5) == doctest::Approx(0.5));
  double prev = 0.0;
  for (double q = 0.0; q <= 5.0; q += 0.25) {
    const double c = coverage(risks, q);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK_THROWS_AS(coverage(std::vector<double>{}, 1.0), std::domain_error);
}

TEST_CASE("risk curve: mass, center, quantile agreement") {
  const RiskVector risks({1.0, 1.6, 2.2, 3.1, 3.3});
  const auto rule = riskdist::BandwidthRule::gaussian_optimal();

  const auto curve = risk_curve(risks, riskdist::EstimatorKind::kde, rule,
                                {-8.0, 12.0, 2001});
  double prev = -1.0;
  double integral = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].cdf >= prev);
    prev = curve[i].cdf;
    if (i > 0) {
      integral += 0.5 * (curve[i].pdf + curve[i - 1].pdf) *
                  (curve[i].t - curve[i - 1].t);
    }
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(curve.front().cdf <= 1e-6);
  CHECK(curve.back().cdf >= 1.0 - 1e-6);

  // Gaussian curve crosses one half at the fitted mean.
  const auto gauss = risk_curve(risks, riskdist::EstimatorKind::gaussian, rule,
                                {2.24 - 1e-9, 2.24 + 1e-9, 3});
  CHECK(gauss[1].cdf == doctest::Approx(0.5).epsilon(1e-6));

  // The t where the kde cdf crosses alpha matches the riskdist quantile to
  // the grid resolution.
  const double alpha = 0.8;
  const double q = riskdist::icdf(
      riskdist::fit(risks, riskdist::EstimatorKind::kde, rule), alpha);
  double crossing = curve.back().t;
  for (const auto& point : curve) {
    if (point.cdf >= alpha) {
      crossing = point.t;
      break;
    }
  }
  CHECK(std::abs(crossing - q) <= 20.0 / 2000.0 + 1e-9);

  CHECK_THROWS_AS(
      risk_curve(risks, riskdist::EstimatorKind::kde, rule, {3.0, 1.0, 100}),
      std::domain_error);
  CHECK_THROWS_AS(
      risk_curve(risks, riskdist::EstimatorKind::kde, rule, {0.0, 1.0, 1}),
      std::domain_error);
  CHECK_THROWS_AS(
      risk_curve(risks, riskdist::EstimatorKind::empirical, rule, {0.0, 1.0, 10}),
      std::invalid_argument);
}

TEST_CASE("qq experiment: identity cell and degenerate family") {
  const semlab::EnvironmentFamily family{};
  const std::size_t ms[] = {10, 1000};
  const auto rows = qq_experiment(family, 0.0, 1.0, AlphaLevel::probability(0.9),
                                  ms, 1000, 3, 99);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].m == 10);
  CHECK(rows[1].m == 1000);
  CHECK(rows[1].mean_abs_gap == 0.0);  // same seed, same sample
  CHECK(rows[0].mean_abs_gap > 0.0);

  // Degenerate meta-distribution: identical domains at every m.
  const semlab::EnvironmentFamily flat{1.0, M_SQRT2, 0.2, 0.0};
  const std::size_t ms2[] = {5, 20, 100};
  const auto rows2 = qq_experiment(flat, 0.0, 1.0, AlphaLevel::probability(0.5),
                                   ms2, 100, 2, 7);
  for (const auto& row : rows2) CHECK(row.mean_abs_gap <= 1e-12);

  CHECK_THROWS_AS(qq_experiment(family, 0.0, 1.0, AlphaLevel::probability(0.9),
                                ms, 500, 3, 99),
                  std::domain_error);
}

TEST_CASE("frontier experiment: single-predictor consistency and invariance") {
  const auto fresh = semlab::sample_environments(
      600, semlab::EnvironmentFamily{}, 1234);

  trainer::Predictor causal;
  causal.weights = {1.0, 0.0};
  trainer::Predictor mixed;
  mixed.weights = {0.4, 0.6};
  const std::vector<TrainedPredictor> trained{{0.5, mixed}, {0.99, causal}};

  const double levels[] = {0.0, 0.5, 0.9, 1.0};
  const auto cells = frontier_experiment(trained, fresh, levels);
  REQUIRE(cells.size() == 8);

  // The causal predictor's row is flat at sigmaY^2 = 2.
  for (std::size_t k = 4; k < 8; ++k) {
    CHECK(cells[k].alpha_train == 0.99);
    CHECK(cells[k].risk == doctest::Approx(2.0).epsilon(1e-12));
  }

  // The mixed row reproduces quantile_report on the same risks.
  const auto risks = trainer::domain_risks(mixed, fresh,
                                           trainer::RiskMode::analytic(), 0);
  const auto report = quantile_report(risks, levels);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(cells[k].risk == doctest::Approx(report.quantiles.at(levels[k])));
  }
}

TEST_CASE("report and curve csv exports") {
  const auto report = quantile_report(RiskVector({1.0, 2.0, 3.0}));
  write_report_csv(report, "evalkit_report_test.csv");
  const auto table = csv::read("evalkit_report_test.csv");
  CHECK(table.header == std::vector<std::string>{"metric", "level", "value"});
  bool saw_mean = false;
  for (const auto& row : table.rows) {
    if (row[0] == "mean_risk") {
      saw_mean = true;
      CHECK(csv::parse_double(row[2]) == doctest::Approx(2.0));
    }
  }
  CHECK(saw_mean);
  std::remove("evalkit_report_test.csv");

  const auto curve = risk_curve(RiskVector({1.0, 2.0}),
                                riskdist::EstimatorKind::gaussian,
                                riskdist::BandwidthRule::gaussian_optimal(),
                                {0.0, 3.0, 5});
  write_curve_csv(curve, "evalkit_curve_test.csv");
  const auto curve_table = csv::read("evalkit_curve_test.csv");
  CHECK(curve_table.header == std::vector<std::string>{"t", "pdf", "cdf"});
  CHECK(curve_table.rows.size() == 5);
  std::remove("evalkit_curve_test.csv");
}
