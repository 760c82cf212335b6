#include "qrmlab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qrmlab/csv.hpp"
#include "qrmlab/parallel.hpp"

namespace qrmlab::evalkit {

EvalReport quantile_report(const riskdist::RiskVector& test_risks,
                           std::span<const double> levels) {
  EvalReport report;
  const auto stats = numkit::summary_stats(test_risks.values());
  report.mean_risk = stats.mean;
  report.invariance_residual = stats.sample_std;
  const auto model = riskdist::fit(test_risks, riskdist::EstimatorKind::empirical);
  for (double level : levels) {
    report.quantiles[level] = riskdist::icdf(model, level);
    report.cvar[level] = riskdist::cvar(test_risks, level);
  }
  return report;
}

double coverage(std::span<const double> test_risks, double predicted_q) {
  if (test_risks.empty()) {
    throw std::domain_error("coverage: no test risks");
  }
  std::size_t below = 0;
  for (double r : test_risks) {
    if (r <= predicted_q) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(test_risks.size());
}

std::vector<CurvePoint> risk_curve(const riskdist::RiskVector& risks,
                                   riskdist::EstimatorKind kind,
                                   const riskdist::BandwidthRule& rule,
                                   const CurveGrid& grid) {
  if (!(grid.t_min < grid.t_max)) {
    throw std::domain_error("risk_curve: t_min must be < t_max");
  }
  if (grid.points < 2) {
    throw std::domain_error("risk_curve: need at least 2 grid points");
  }
  if (kind == riskdist::EstimatorKind::empirical) {
    throw std::invalid_argument("risk_curve: empirical estimator has no density");
  }
  const auto model = riskdist::fit(risks, kind, rule);

  auto pdf_at = [&](double t) -> double {
    if (const auto* g = std::get_if<riskdist::GaussianModel>(&model)) {
      if (g->sigma_hat == 0.0) return 0.0;
      return numkit::std_normal_pdf((t - g->mu_hat) / g->sigma_hat) / g->sigma_hat;
    }
    const auto& k = std::get<riskdist::KdeModel>(model);
    if (k.bandwidth == 0.0) return 0.0;
    double acc = 0.0;
    for (double c : k.centers) {
      acc += numkit::std_normal_pdf((t - c) / k.bandwidth);
    }
    return acc / (k.bandwidth * static_cast<double>(k.centers.size()));
  };

  std::vector<CurvePoint> curve(grid.points);
  const double dt = (grid.t_max - grid.t_min) / static_cast<double>(grid.points - 1);
  for (std::size_t i = 0; i < grid.points; ++i) {
    const double t = grid.t_min + dt * static_cast<double>(i);
    curve[i] = CurvePoint{t, pdf_at(t), riskdist::cdf(model, t)};
  }
  return curve;
}

std::vector<QqRow> qq_experiment(const semlab::EnvironmentFamily& family,
                                 double beta1, double beta2,
                                 const numkit::AlphaLevel& alpha,
                                 std::span<const std::size_t> m_values,
                                 std::size_t m_reference, std::size_t seeds,
                                 std::uint64_t seed_base,
                                 const riskdist::BandwidthRule& rule) {
  if (m_values.empty() || seeds == 0) {
    throw std::domain_error("qq_experiment: empty grid");
  }
  const std::size_t m_max = *std::max_element(m_values.begin(), m_values.end());
  if (m_reference < m_max || m_reference < 2) {
    throw std::domain_error("qq_experiment: m_reference must cover m_values");
  }

  auto kde_quantile = [&](const semlab::EnvironmentSet& envs) {
    std::vector<double> risks(envs.size());
    for (std::size_t i = 0; i < envs.size(); ++i) {
      risks[i] = semlab::analytic_risk(beta1, beta2, envs.domains[i]);
    }
    return riskdist::icdf(
        riskdist::fit(riskdist::RiskVector(std::move(risks)),
                      riskdist::EstimatorKind::kde, rule),
        alpha);
  };

  // One cell per (seed, m); the sampling seed depends on (seed, m) only,
  // so the m == m_reference cell reproduces the reference exactly.
  std::vector<std::vector<double>> gaps(seeds,
                                        std::vector<double>(m_values.size()));
  parallel::for_each_index(seeds, [&](std::size_t s) {
    auto env_seed = [&](std::size_t m) {
      return numkit::mix_seed(numkit::mix_seed(seed_base, s), m);
    };
    const double q_ref = kde_quantile(
        semlab::sample_environments(m_reference, family, env_seed(m_reference)));
    for (std::size_t k = 0; k < m_values.size(); ++k) {
      const double q_m = kde_quantile(
          semlab::sample_environments(m_values[k], family, env_seed(m_values[k])));
      gaps[s][k] = std::abs(q_m - q_ref);
    }
  });

  std::vector<QqRow> rows(m_values.size());
  for (std::size_t k = 0; k < m_values.size(); ++k) {
    double acc = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) acc += gaps[s][k];
    rows[k] = QqRow{m_values[k], acc / static_cast<double>(seeds)};
  }
  return rows;
}

std::vector<FrontierCell> frontier_experiment(
    std::span<const TrainedPredictor> trained,
    const semlab::EnvironmentSet& fresh, std::span<const double> levels) {
  if (trained.empty()) {
    throw std::domain_error("frontier_experiment: no trained predictors");
  }
  std::vector<FrontierCell> cells;
  cells.reserve(trained.size() * levels.size());
  for (const auto& entry : trained) {
    const auto risks = trainer::domain_risks(
        entry.predictor, fresh, trainer::RiskMode::analytic(), 0);
    const auto model = riskdist::fit(risks, riskdist::EstimatorKind::empirical);
    for (double level : levels) {
      cells.push_back(
          FrontierCell{entry.alpha_train, level, riskdist::icdf(model, level)});
    }
  }
  return cells;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  csv::Table table;
  table.header = {"metric", "level", "value"};
  table.rows.push_back({"mean_risk", "", csv::format_double(report.mean_risk)});
  for (const auto& [level, value] : report.quantiles) {
    table.rows.push_back(
        {"quantile", csv::format_double(level), csv::format_double(value)});
  }
  for (const auto& [level, value] : report.cvar) {
    table.rows.push_back(
        {"cvar", csv::format_double(level), csv::format_double(value)});
  }
  table.rows.push_back({"invariance_residual", "",
                        csv::format_double(report.invariance_residual)});
  if (report.coverage_at_alpha) {
    const auto& c = *report.coverage_at_alpha;
    table.rows.push_back({"predicted_quantile", csv::format_double(c.alpha),
                          csv::format_double(c.predicted_q)});
    table.rows.push_back({"coverage", csv::format_double(c.alpha),
                          csv::format_double(c.fraction_below)});
  }
  csv::write(path, table);
}

void write_curve_csv(std::span<const CurvePoint> curve, const std::string& path) {
  csv::Table table;
  table.header = {"t", "pdf", "cdf"};
  table.rows.reserve(curve.size());
  for (const auto& point : curve) {
    table.rows.push_back({csv::format_double(point.t),
                          csv::format_double(point.pdf),
                          csv::format_double(point.cdf)});
  }
  csv::write(path, table);
}

}  // namespace qrmlab::evalkit
