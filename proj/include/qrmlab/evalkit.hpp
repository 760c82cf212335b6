#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrmlab/riskdist.hpp"
#include "qrmlab/semlab.hpp"
#include "qrmlab/trainer.hpp"

namespace qrmlab::evalkit {

inline constexpr double kDefaultLevels[] = {0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0};

struct CoverageEntry {
  double alpha;
  double predicted_q;
  double fraction_below;
};

// Quantile-focused summary of one predictor over a set of test domains.
// Test quantiles use the unsmoothed empirical convention; KDE smoothing is
// reserved for curve plotting.
struct EvalReport {
  double mean_risk = 0.0;
  std::map<double, double> quantiles;  // level -> empirical quantile risk
  std::map<double, double> cvar;       // level -> superquantile
  double invariance_residual = 0.0;    // sample std of the test risks
  std::optional<CoverageEntry> coverage_at_alpha;
};

EvalReport quantile_report(const riskdist::RiskVector& test_risks,
                           std::span<const double> levels = kDefaultLevels);

// Empirical frequency of test risks <= predicted_q.
double coverage(std::span<const double> test_risks, double predicted_q);

struct CurvePoint {
  double t;
  double pdf;
  double cdf;
};

struct CurveGrid {
  double t_min;
  double t_max;
  std::size_t points;  // >= 2
};

// Density and CDF of the fitted risk distribution on an even grid
// (gaussian or kde estimators; a degenerate model reports zero density).
std::vector<CurvePoint> risk_curve(const riskdist::RiskVector& risks,
                                   riskdist::EstimatorKind kind,
                                   const riskdist::BandwidthRule& rule,
                                   const CurveGrid& grid);

struct QqRow {
  std::size_t m;
  double mean_abs_gap;  // mean over seeds of |q_hat_m - q_reference|
};

// Convergence of the estimated alpha-quantile in the number of domains m:
// for each (seed, m) cell, freshly sampled domains are scored against an
// m_reference-domain estimate from the same seed (the m == m_reference
// cell reuses the reference sample, so its gap is exactly 0). Analytic
// risks of a fixed linear predictor.
std::vector<QqRow> qq_experiment(const semlab::EnvironmentFamily& family,
                                 double beta1, double beta2,
                                 const numkit::AlphaLevel& alpha,
                                 std::span<const std::size_t> m_values,
                                 std::size_t m_reference, std::size_t seeds,
                                 std::uint64_t seed_base,
                                 const riskdist::BandwidthRule& rule =
                                     riskdist::BandwidthRule::gaussian_optimal());

struct TrainedPredictor {
  double alpha_train;
  trainer::Predictor predictor;
};

struct FrontierCell {
  double alpha_train;
  double level;
  double risk;  // empirical level-quantile of fresh-domain risks
};

// Per trained predictor, the empirical quantiles of its analytic risks on
// a fresh domain set, at every requested level.
std::vector<FrontierCell> frontier_experiment(
    std::span<const TrainedPredictor> trained,
    const semlab::EnvironmentSet& fresh,
    std::span<const double> levels = kDefaultLevels);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_curve_csv(std::span<const CurvePoint> curve, const std::string& path);

}  // namespace qrmlab::evalkit
