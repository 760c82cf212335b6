#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "qrmlab/numkit.hpp"

namespace qrmlab::riskdist {

// Per-domain empirical risks of one predictor; a finite sample from its
// risk distribution over domains. At least two entries, all finite.
class RiskVector {
 public:
  explicit RiskVector(std::vector<double> risks);

  std::size_t size() const { return risks_.size(); }
  double operator[](std::size_t i) const { return risks_[i]; }
  const std::vector<double>& values() const { return risks_; }

 private:
  std::vector<double> risks_;
};

enum class EstimatorKind { gaussian, kde, empirical };

struct BandwidthRule {
  enum class Kind { gaussian_optimal, silverman, median_heuristic, fixed };

  Kind kind = Kind::gaussian_optimal;
  double fixed_h = 0.0;

  static BandwidthRule gaussian_optimal() { return {Kind::gaussian_optimal, 0.0}; }
  static BandwidthRule silverman() { return {Kind::silverman, 0.0}; }
  // Documented to perform poorly for small samples; never the default.
  static BandwidthRule median_heuristic() { return {Kind::median_heuristic, 0.0}; }
  static BandwidthRule fixed(double h);
};

struct GaussianModel {
  double mu_hat;
  double sigma_hat;  // >= 0
};

struct KdeModel {
  std::vector<double> centers;  // one Gaussian kernel per training risk
  double bandwidth;             // >= 0; 0 degrades to the empirical step CDF
};

struct EmpiricalModel {
  std::vector<double> sorted_risks;  // nondecreasing
};

using RiskModel = std::variant<GaussianModel, KdeModel, EmpiricalModel>;

double bandwidth(const RiskVector& risks, const BandwidthRule& rule);

RiskModel fit(const RiskVector& risks, EstimatorKind kind,
              const BandwidthRule& rule = BandwidthRule::gaussian_optimal());

// CDF value in [0, 1], nondecreasing in t.
double cdf(const RiskModel& model, double t);

// Quantile of the fitted model.
//
// Gaussian: closed form mu + sigma * icdf(alpha). KDE: bisection over
// [min_i, max_i] of the per-kernel inverses L_i + h * icdf(alpha), at most
// 32 halvings; extreme levels are solved against the log survival function
// so the right tail keeps growing as ln(1-alpha) -> -inf. Empirical: the
// ceil(alpha*m) order statistic, with alpha=0 the minimum and alpha=1 the
// maximum.
double icdf(const RiskModel& model, const numkit::AlphaLevel& a);
inline double icdf(const RiskModel& model, double alpha) {
  return icdf(model, numkit::AlphaLevel::probability(alpha));
}

// d(quantile)/d(risk_i) of icdf(fit(risks, kind, rule), a), length m.
//
// With h_stop_gradient set, the KDE bandwidth is treated as a constant;
// otherwise its dependence on the risks is propagated for the
// gaussian_optimal and silverman rules (fixed and median_heuristic behave
// as constants). All entries sum to 1. When the sample std of the risks is
// zero the uniform vector (1/m, ...) is returned; the empirical estimator
// is not differentiable and throws std::invalid_argument.
std::vector<double> quantile_gradient(const RiskVector& risks,
                                      const numkit::AlphaLevel& a,
                                      EstimatorKind kind,
                                      const BandwidthRule& rule,
                                      bool h_stop_gradient = false);

// Superquantile (CVaR): mean of the risks above the alpha-quantile by
// sorted position, i.e. of the top m - ceil(alpha*m) order statistics.
// alpha = 1 (or an empty tail) returns the maximum risk.
double cvar(const RiskVector& risks, double alpha);

}  // namespace qrmlab::riskdist
