#include "qrmlab/riskdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace qrmlab::riskdist {

namespace {

constexpr int kBisectionSteps = 32;

struct MeanStd {
  double mean;
  double std;  // m-1 denominator
};

MeanStd mean_std(const std::vector<double>& v) {
  const auto m = static_cast<double>(v.size());
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / m;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (m - 1.0))};
}

// Step CDF: fraction of values <= t.
double step_cdf(const std::vector<double>& sorted, double t) {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(it - sorted.begin()) /
         static_cast<double>(sorted.size());
}

// ceil(alpha*m) order statistic, 1-based; alpha=0 maps to the minimum.
double order_statistic(const std::vector<double>& sorted, double alpha) {
  const auto m = static_cast<double>(sorted.size());
  if (alpha <= 0.0) return sorted.front();
  if (alpha >= 1.0) return sorted.back();
  // Guard against e.g. 0.1*30 landing just above the integer.
  auto k = static_cast<std::size_t>(std::ceil(alpha * m - 1e-9));
  k = std::min(std::max<std::size_t>(k, 1), sorted.size());
  return sorted[k - 1];
}

double logsumexp(const std::vector<double>& xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// ln of the KDE survival function at x.
double kde_log_sf(const KdeModel& m, double x) {
  std::vector<double> terms(m.centers.size());
  for (std::size_t i = 0; i < m.centers.size(); ++i) {
    terms[i] = numkit::std_normal_log_sf((x - m.centers[i]) / m.bandwidth);
  }
  return logsumexp(terms) - std::log(static_cast<double>(m.centers.size()));
}

double kde_cdf_positive_h(const KdeModel& m, double t) {
  double acc = 0.0;
  for (double c : m.centers) {
    acc += numkit::std_normal_cdf((t - c) / m.bandwidth);
  }
  return acc / static_cast<double>(m.centers.size());
}

double kde_icdf(const KdeModel& model, const numkit::AlphaLevel& a) {
  if (model.bandwidth == 0.0) {
    std::vector<double> sorted = model.centers;
    std::sort(sorted.begin(), sorted.end());
    return order_statistic(sorted, a.alpha());
  }
  const double q = numkit::std_normal_icdf(a);
  const auto [lo_it, hi_it] =
      std::minmax_element(model.centers.begin(), model.centers.end());
  double lo = *lo_it + model.bandwidth * q;
  double hi = *hi_it + model.bandwidth * q;
  if (lo == hi) return lo;

  const double log1m = a.log_one_minus_alpha();
  if (log1m < -30.0) {
    // 1-alpha is at (or beyond) the edge of double resolution; bisect the
    // log survival function instead of the saturated CDF.
    for (int i = 0; i < kBisectionSteps; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (kde_log_sf(model, mid) > log1m) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  const double alpha = a.alpha();
  // The per-kernel inverses bracket the mixture quantile; anything else is
  // a convergence failure.
  if (kde_cdf_positive_h(model, lo) > alpha + 1e-9 ||
      kde_cdf_positive_h(model, hi) < alpha - 1e-9) {
    throw std::runtime_error("kde icdf: initial bracket does not straddle alpha");
  }
  for (int i = 0; i < kBisectionSteps; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (kde_cdf_positive_h(model, mid) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Adds scale * d(type-7 quantile at p)/d(values) into grad.
void add_type7_gradient(const std::vector<double>& values, double p,
                        double scale, std::vector<double>& grad) {
  const std::size_t n = values.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t i, std::size_t j) {
    return values[i] < values[j];
  });
  const double h = static_cast<double>(n - 1) * p;
  const auto j = static_cast<std::size_t>(h);
  if (j + 1 >= n) {
    grad[perm.back()] += scale;
    return;
  }
  const double g = h - static_cast<double>(j);
  grad[perm[j]] += scale * (1.0 - g);
  grad[perm[j + 1]] += scale * g;
}

// d(bandwidth)/d(risks) for the data-driven rules; zero for fixed and
// median_heuristic (the latter treated as a constant, matching its
// non-default, diagnostics-only role).
std::vector<double> bandwidth_gradient(const RiskVector& risks,
                                       const BandwidthRule& rule,
                                       const MeanStd& ms) {
  const std::size_t m = risks.size();
  std::vector<double> grad(m, 0.0);
  switch (rule.kind) {
    case BandwidthRule::Kind::gaussian_optimal: {
      const double c = std::pow(4.0 / (3.0 * static_cast<double>(m)), 0.2);
      for (std::size_t i = 0; i < m; ++i) {
        grad[i] = c * (risks[i] - ms.mean) /
                  ((static_cast<double>(m) - 1.0) * ms.std);
      }
      return grad;
    }
    case BandwidthRule::Kind::silverman: {
      const double scale = std::pow(static_cast<double>(m), -0.2);
      const auto stats = numkit::summary_stats(risks.values());
      if (ms.std <= stats.iqr / 1.34) {
        for (std::size_t i = 0; i < m; ++i) {
          grad[i] = scale * (risks[i] - ms.mean) /
                    ((static_cast<double>(m) - 1.0) * ms.std);
        }
      } else {
        add_type7_gradient(risks.values(), 0.75, scale / 1.34, grad);
        add_type7_gradient(risks.values(), 0.25, -scale / 1.34, grad);
      }
      return grad;
    }
    case BandwidthRule::Kind::median_heuristic:
    case BandwidthRule::Kind::fixed:
      return grad;
  }
  return grad;
}

}  // namespace

RiskVector::RiskVector(std::vector<double> risks) : risks_(std::move(risks)) {
  if (risks_.size() < 2) {
    throw std::domain_error("RiskVector: need at least 2 domains");
  }
  for (double r : risks_) {
    if (!std::isfinite(r)) {
      throw std::domain_error("RiskVector: non-finite risk");
    }
  }
}

BandwidthRule BandwidthRule::fixed(double h) {
  if (!(h >= 0.0)) {
    throw std::domain_error("BandwidthRule: fixed bandwidth must be >= 0");
  }
  return {Kind::fixed, h};
}

double bandwidth(const RiskVector& risks, const BandwidthRule& rule) {
  const auto m = static_cast<double>(risks.size());
  switch (rule.kind) {
    case BandwidthRule::Kind::gaussian_optimal:
      return std::pow(4.0 / (3.0 * m), 0.2) * mean_std(risks.values()).std;
    case BandwidthRule::Kind::silverman: {
      const auto stats = numkit::summary_stats(risks.values());
      return std::pow(m, -0.2) * std::min(stats.sample_std, stats.iqr / 1.34);
    }
    case BandwidthRule::Kind::median_heuristic:
      return numkit::summary_stats(risks.values()).median_pairwise_distance;
    case BandwidthRule::Kind::fixed:
      return rule.fixed_h;
  }
  throw std::logic_error("bandwidth: unknown rule");
}

RiskModel fit(const RiskVector& risks, EstimatorKind kind,
              const BandwidthRule& rule) {
  switch (kind) {
    case EstimatorKind::gaussian: {
      const auto ms = mean_std(risks.values());
      return GaussianModel{ms.mean, ms.std};
    }
    case EstimatorKind::kde:
      return KdeModel{risks.values(), bandwidth(risks, rule)};
    case EstimatorKind::empirical: {
      std::vector<double> sorted = risks.values();
      std::sort(sorted.begin(), sorted.end());
      return EmpiricalModel{std::move(sorted)};
    }
  }
  throw std::logic_error("fit: unknown estimator kind");
}

double cdf(const RiskModel& model, double t) {
  if (!std::isfinite(t)) {
    throw std::domain_error("cdf: non-finite evaluation point");
  }
  return std::visit(
      [t](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianModel>) {
          if (m.sigma_hat == 0.0) return t < m.mu_hat ? 0.0 : 1.0;
          return numkit::std_normal_cdf((t - m.mu_hat) / m.sigma_hat);
        } else if constexpr (std::is_same_v<T, KdeModel>) {
          if (m.bandwidth == 0.0) {
            std::vector<double> sorted = m.centers;
            std::sort(sorted.begin(), sorted.end());
            return step_cdf(sorted, t);
          }
          return kde_cdf_positive_h(m, t);
        } else {
          return step_cdf(m.sorted_risks, t);
        }
      },
      model);
}

double icdf(const RiskModel& model, const numkit::AlphaLevel& a) {
  return std::visit(
      [&a](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianModel>) {
          return m.mu_hat + m.sigma_hat * numkit::std_normal_icdf(a);
        } else if constexpr (std::is_same_v<T, KdeModel>) {
          return kde_icdf(m, a);
        } else {
          return order_statistic(m.sorted_risks, a.alpha());
        }
      },
      model);
}

std::vector<double> quantile_gradient(const RiskVector& risks,
                                      const numkit::AlphaLevel& a,
                                      EstimatorKind kind,
                                      const BandwidthRule& rule,
                                      bool h_stop_gradient) {
  if (kind == EstimatorKind::empirical) {
    throw std::invalid_argument(
        "quantile_gradient: empirical estimator is not differentiable");
  }
  const std::size_t m = risks.size();
  const auto ms = mean_std(risks.values());
  if (ms.std == 0.0) {
    // Degenerate sample: every data-driven bandwidth is 0 and the quantile
    // sits at the common value; return the alpha=0.5 limit.
    return std::vector<double>(m, 1.0 / static_cast<double>(m));
  }

  if (kind == EstimatorKind::gaussian) {
    const double q = numkit::std_normal_icdf(a);
    std::vector<double> grad(m);
    for (std::size_t i = 0; i < m; ++i) {
      grad[i] = 1.0 / static_cast<double>(m) +
                q * (risks[i] - ms.mean) / ((static_cast<double>(m) - 1.0) * ms.std);
    }
    return grad;
  }

  const double h = bandwidth(risks, rule);
  if (h <= 0.0) {
    throw std::invalid_argument("quantile_gradient: kde requires bandwidth > 0");
  }
  const KdeModel model{risks.values(), h};
  const double q = kde_icdf(model, a);

  // Softmax of the log kernel densities at q; stable for extreme levels
  // where the densities themselves underflow.
  std::vector<double> w(m);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double z = (q - risks[i]) / h;
    w[i] = -0.5 * z * z;
    mx = std::max(mx, w[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    w[i] = std::exp(w[i] - mx);
    sum += w[i];
  }
  for (double& wi : w) wi /= sum;

  if (h_stop_gradient) return w;

  // Implicit-function step for the data-dependent bandwidth:
  // dq/dL_i = w_i + (sum_j w_j z_j) * dh/dL_i.
  double wz = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    wz += w[i] * (q - risks[i]) / h;
  }
  const auto dh = bandwidth_gradient(risks, rule, ms);
  for (std::size_t i = 0; i < m; ++i) {
    w[i] += wz * dh[i];
  }
  return w;
}

double cvar(const RiskVector& risks, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::domain_error("cvar: alpha must be in [0, 1]");
  }
  std::vector<double> sorted = risks.values();
  std::sort(sorted.begin(), sorted.end());
  if (alpha == 1.0) return sorted.back();
  const auto m = static_cast<double>(sorted.size());
  const auto k = static_cast<std::size_t>(
      std::max(0.0, std::ceil(alpha * m - 1e-9)));
  if (k >= sorted.size()) return sorted.back();
  double acc = 0.0;
  for (std::size_t i = k; i < sorted.size(); ++i) acc += sorted[i];
  return acc / static_cast<double>(sorted.size() - k);
}

}  // namespace qrmlab::riskdist
