#include "qrmlab/semlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qrmlab/csv.hpp"
#include "qrmlab/numkit.hpp"

namespace qrmlab::semlab {

namespace {

void require_valid(const DomainSpec& spec) {
  if (!(spec.sigma1 >= 0.0 && spec.sigmaY >= 0.0 && spec.sigma2 >= 0.0)) {
    throw std::domain_error("DomainSpec: standard deviations must be >= 0");
  }
  if (spec.intervention && !std::isfinite(spec.intervention->value)) {
    throw std::domain_error("DomainSpec: intervention value must be finite");
  }
}

// Coefficients of the (possibly intervened) structural assignments:
//   X1 = a + b*N1,   X2 = p + q*Y + r*N2.
struct AssignmentCoeffs {
  double a = 0.0, b = 1.0;
  double p = 0.0, q = 1.0, r = 1.0;
};

AssignmentCoeffs assignment_coeffs(const DomainSpec& spec) {
  AssignmentCoeffs co;
  if (!spec.intervention) return co;
  const auto& iv = *spec.intervention;
  if (iv.target == Intervention::Target::x1) {
    switch (iv.kind) {
      case Intervention::Kind::hard:        co.a = iv.value; co.b = 0.0; break;
      case Intervention::Kind::shift:       co.a = iv.value; break;
      case Intervention::Kind::noise_scale: co.b = iv.value; break;
      // X1's assignment is its noise, so scale and noise_scale coincide.
      case Intervention::Kind::scale:       co.b = iv.value; break;
    }
  } else {
    switch (iv.kind) {
      case Intervention::Kind::hard:        co.p = iv.value; co.q = 0.0; co.r = 0.0; break;
      case Intervention::Kind::shift:       co.p = iv.value; break;
      case Intervention::Kind::noise_scale: co.r = iv.value; break;
      case Intervention::Kind::scale:       co.q = iv.value; co.r = iv.value; break;
    }
  }
  return co;
}

}  // namespace

EnvironmentSet sample_environments(std::size_t m, double sigma2_mu,
                                   double sigma2_sigma, double sigma1,
                                   double sigmaY, std::uint64_t seed) {
  if (m < 2) {
    throw std::domain_error("sample_environments: need at least 2 domains");
  }
  EnvironmentSet set;
  set.meta_seed = seed;
  set.domains.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    numkit::RngStream rng(seed, i);
    set.domains[i] =
        DomainSpec{sigma1, sigmaY,
                   numkit::sample_lognormal(rng, sigma2_mu, sigma2_sigma), {}};
  }
  return set;
}

EnvironmentSet sample_environments(std::size_t m, const EnvironmentFamily& family,
                                   std::uint64_t seed) {
  return sample_environments(m, family.sigma2_mu, family.sigma2_sigma,
                             family.sigma1, family.sigmaY, seed);
}

DomainDataset generate_data(const DomainSpec& spec, std::size_t n,
                            std::uint64_t seed, parallel::Exec exec) {
  require_valid(spec);
  if (n < 1) {
    throw std::domain_error("generate_data: need at least 1 sample");
  }
  const auto co = assignment_coeffs(spec);
  DomainDataset data;
  data.cols = 2;
  data.covariates.resize(n * 2);
  data.labels.resize(n);
  parallel::for_chunks(
      n, parallel::kDefaultChunk, exec,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        numkit::RngStream rng(seed, chunk);
        for (std::size_t i = begin; i < end; ++i) {
          // All three noises are drawn even under interventions, so paired
          // seeds stay row-aligned across intervention variants.
          const double n1 = spec.sigma1 * rng.normal();
          const double ny = spec.sigmaY * rng.normal();
          const double n2 = spec.sigma2 * rng.normal();
          const double x1 = co.a + co.b * n1;
          const double y = x1 + ny;
          const double x2 = co.p + co.q * y + co.r * n2;
          data.covariates[2 * i] = x1;
          data.covariates[2 * i + 1] = x2;
          data.labels[i] = y;
        }
      });
  return data;
}

DomainDataset generate_color_shape(const ColorShapeSpec& spec, std::size_t n,
                                   std::uint64_t seed, parallel::Exec exec) {
  if (!(spec.p_color >= 0.0 && spec.p_color <= 1.0 &&
        spec.p_shape >= 0.0 && spec.p_shape <= 1.0)) {
    throw std::domain_error("ColorShapeSpec: rates must be in [0, 1]");
  }
  if (n < 1) {
    throw std::domain_error("generate_color_shape: need at least 1 sample");
  }
  DomainDataset data;
  data.cols = 2;
  data.covariates.resize(n * 2);
  data.labels.resize(n);
  parallel::for_chunks(
      n, parallel::kDefaultChunk, exec,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        numkit::RngStream rng(seed, chunk);
        for (std::size_t i = begin; i < end; ++i) {
          const bool y = numkit::sample_bernoulli(rng, 0.5);
          const bool color = numkit::sample_bernoulli(rng, spec.p_color) ? y : !y;
          const bool shape = numkit::sample_bernoulli(rng, spec.p_shape) ? y : !y;
          data.covariates[2 * i] = color ? 1.0 : -1.0;
          data.covariates[2 * i + 1] = shape ? 1.0 : -1.0;
          data.labels[i] = y ? 1.0 : 0.0;
        }
      });
  return data;
}

double analytic_risk(double beta1, double beta2, const DomainSpec& spec) {
  require_valid(spec);
  if (spec.intervention) {
    throw std::invalid_argument(
        "analytic_risk: closed form covers the plain SEM only");
  }
  const double d1 = beta1 + beta2 - 1.0;
  const double d2 = beta2 - 1.0;
  return d1 * d1 * spec.sigma1 * spec.sigma1 +
         d2 * d2 * spec.sigmaY * spec.sigmaY +
         beta2 * beta2 * spec.sigma2 * spec.sigma2;
}

std::array<double, 2> analytic_risk_gradient(double beta1, double beta2,
                                             const DomainSpec& spec) {
  require_valid(spec);
  if (spec.intervention) {
    throw std::invalid_argument(
        "analytic_risk_gradient: closed form covers the plain SEM only");
  }
  const double v1 = spec.sigma1 * spec.sigma1;
  const double vY = spec.sigmaY * spec.sigmaY;
  const double v2 = spec.sigma2 * spec.sigma2;
  const double d1 = beta1 + beta2 - 1.0;
  return {2.0 * d1 * v1,
          2.0 * d1 * v1 + 2.0 * (beta2 - 1.0) * vY + 2.0 * beta2 * v2};
}

DomainMoments domain_moments(const DomainSpec& spec) {
  require_valid(spec);
  const auto co = assignment_coeffs(spec);
  const double v1 = spec.sigma1 * spec.sigma1;
  const double vY = spec.sigmaY * spec.sigmaY;
  const double v2 = spec.sigma2 * spec.sigma2;

  const double ex1_sq = co.a * co.a + co.b * co.b * v1;  // E[X1^2]
  const double ey_sq = ex1_sq + vY;                      // E[Y^2]
  const double ex1x2 = co.a * co.p + co.q * ex1_sq;
  const double ex2_sq = co.p * co.p + co.q * co.q * ey_sq + co.r * co.r * v2 +
                        2.0 * co.p * co.q * co.a;

  DomainMoments mom;
  mom.dim = 2;
  mom.second_moment_xx = {ex1_sq, ex1x2, ex1x2, ex2_sq};
  mom.cross_moment_xn = {0.0, co.q * vY};
  return mom;
}

namespace {

void require_valid(std::span<const double> delta, const DomainMoments& mom) {
  if (mom.dim == 0 || delta.size() != mom.dim ||
      mom.second_moment_xx.size() != mom.dim * mom.dim ||
      mom.cross_moment_xn.size() != mom.dim) {
    throw std::domain_error("excess_risk: dimension mismatch");
  }
  for (std::size_t i = 0; i < mom.dim; ++i) {
    for (std::size_t j = i + 1; j < mom.dim; ++j) {
      const double a = mom.second_moment_xx[i * mom.dim + j];
      const double b = mom.second_moment_xx[j * mom.dim + i];
      if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(a))) {
        throw std::domain_error("excess_risk: moment matrix not symmetric");
      }
    }
  }
}

double quadratic_form(std::span<const double> x, const DomainMoments& mom) {
  double quad = 0.0;
  for (std::size_t i = 0; i < mom.dim; ++i) {
    for (std::size_t j = 0; j < mom.dim; ++j) {
      quad += x[i] * mom.second_moment_xx[i * mom.dim + j] * x[j];
    }
  }
  double lin = 0.0;
  for (std::size_t i = 0; i < mom.dim; ++i) {
    lin += x[i] * mom.cross_moment_xn[i];
  }
  return quad + 2.0 * lin;
}

// gradient of the excess-risk form: 2 M x + 2 c.
void form_gradient(std::span<const double> x, const DomainMoments& mom,
                   std::span<double> out) {
  for (std::size_t i = 0; i < mom.dim; ++i) {
    double g = mom.cross_moment_xn[i];
    for (std::size_t j = 0; j < mom.dim; ++j) {
      g += mom.second_moment_xx[i * mom.dim + j] * x[j];
    }
    out[i] = 2.0 * g;
  }
}

}  // namespace

double excess_risk(std::span<const double> delta, const DomainMoments& mom) {
  require_valid(delta, mom);
  return quadratic_form(delta, mom);
}

std::vector<double> excess_risk(std::span<const double> delta,
                                std::span<const DomainMoments> moments) {
  std::vector<double> out;
  out.reserve(moments.size());
  for (const auto& mom : moments) out.push_back(excess_risk(delta, mom));
  return out;
}

namespace {

double spec_residual(std::span<const double> x,
                     std::span<const DomainMoments> moments) {
  std::vector<double> forms(moments.size());
  for (std::size_t i = 0; i < moments.size(); ++i) {
    forms[i] = quadratic_form(x, moments[i]);
  }
  double r = std::max(forms[0], 0.0);
  for (std::size_t i = 0; i < forms.size(); ++i) {
    for (std::size_t j = i + 1; j < forms.size(); ++j) {
      r += std::abs(forms[i] - forms[j]);
    }
  }
  return r;
}

// Smooth surrogate used for the descent itself; the reported residual is
// spec_residual at the found point.
double surrogate(std::span<const double> x,
                 std::span<const DomainMoments> moments,
                 std::vector<double>& forms) {
  forms.resize(moments.size());
  for (std::size_t i = 0; i < moments.size(); ++i) {
    forms[i] = quadratic_form(x, moments[i]);
  }
  double s = 0.0;
  const double f0 = std::max(forms[0], 0.0);
  s += f0 * f0;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    for (std::size_t j = i + 1; j < forms.size(); ++j) {
      const double d = forms[i] - forms[j];
      s += d * d;
    }
  }
  return s;
}

void normalize(std::vector<double>& x) {
  double norm = 0.0;
  for (double v : x) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    x[0] = 1.0;
    return;
  }
  for (double& v : x) v /= norm;
}

}  // namespace

UniquenessResult verify_unique_invariant_minimum(
    std::span<const DomainMoments> moments, double tolerance, int restarts) {
  if (moments.empty()) {
    throw std::domain_error("verify_unique_invariant_minimum: no domains");
  }
  const std::size_t d = moments[0].dim;
  for (const auto& mom : moments) {
    std::vector<double> zero(d, 0.0);
    require_valid(zero, mom);
  }

  double scale = 0.0;
  for (const auto& mom : moments) {
    for (double v : mom.second_moment_xx) scale = std::max(scale, std::abs(v));
    for (double v : mom.cross_moment_xn) scale = std::max(scale, std::abs(v));
  }
  UniquenessResult result;
  if (scale == 0.0) {
    // All-zero moments: every unit vector solves the system.
    result.unique = false;
    result.witness = std::vector<double>(d, 0.0);
    (*result.witness)[0] = 1.0;
    result.residual = 0.0;
    return result;
  }
  const double threshold = tolerance * scale;

  double best_residual = std::numeric_limits<double>::infinity();
  std::vector<double> best_x(d, 0.0);
  std::vector<double> forms, grad(d), form_grad(d), candidate(d);

  numkit::RngStream rng(0x5eedf00dULL, 0);
  for (int restart = 0; restart < restarts; ++restart) {
    std::vector<double> x(d);
    if (restart < static_cast<int>(2 * d)) {
      // Coordinate directions first, then random starts.
      x.assign(d, 0.0);
      x[restart / 2] = (restart % 2 == 0) ? 1.0 : -1.0;
    } else {
      for (double& v : x) v = rng.normal();
      normalize(x);
    }

    double value = surrogate(x, moments, forms);
    double step = 1.0;
    for (int iter = 0; iter < 300; ++iter) {
      // Surrogate gradient.
      std::fill(grad.begin(), grad.end(), 0.0);
      const double f0 = std::max(forms[0], 0.0);
      if (f0 > 0.0) {
        form_gradient(x, moments[0], form_grad);
        for (std::size_t k = 0; k < d; ++k) grad[k] += 2.0 * f0 * form_grad[k];
      }
      for (std::size_t i = 0; i < moments.size(); ++i) {
        form_gradient(x, moments[i], form_grad);
        for (std::size_t j = 0; j < moments.size(); ++j) {
          if (i == j) continue;
          const double diff = forms[i] - forms[j];
          for (std::size_t k = 0; k < d; ++k) {
            grad[k] += 2.0 * diff * form_grad[k];
          }
        }
      }
      double gnorm = 0.0;
      for (double g : grad) gnorm += g * g;
      gnorm = std::sqrt(gnorm);
      if (gnorm < 1e-300) break;

      // Backtracking projected step.
      bool moved = false;
      for (int bt = 0; bt < 30; ++bt) {
        for (std::size_t k = 0; k < d; ++k) {
          candidate[k] = x[k] - step * grad[k] / gnorm;
        }
        normalize(candidate);
        const double cand_value = surrogate(candidate, moments, forms);
        if (cand_value < value) {
          x = candidate;
          value = cand_value;
          step *= 1.5;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      // Re-evaluate forms at the accepted point for the next iteration.
      surrogate(x, moments, forms);
    }

    const double residual = spec_residual(x, moments);
    if (residual < best_residual) {
      best_residual = residual;
      best_x = x;
    }
    if (best_residual < threshold) break;
  }

  result.residual = best_residual;
  if (best_residual < threshold) {
    result.unique = false;
    result.witness = best_x;
  } else {
    result.unique = true;
    result.inconclusive = best_residual < 100.0 * threshold;
  }
  return result;
}

void write_dataset_csv(const DomainDataset& data, const std::string& path,
                       std::span<const std::string> column_names) {
  if (column_names.size() != data.cols + 1) {
    throw std::invalid_argument("write_dataset_csv: header size mismatch");
  }
  csv::Table table;
  table.header.assign(column_names.begin(), column_names.end());
  table.rows.reserve(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(data.cols + 1);
    for (std::size_t j = 0; j < data.cols; ++j) {
      row.push_back(csv::format_double(data.x(i, j)));
    }
    row.push_back(csv::format_double(data.labels[i]));
    table.rows.push_back(std::move(row));
  }
  csv::write(path, table);
}

}  // namespace qrmlab::semlab
