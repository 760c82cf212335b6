#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrmlab/parallel.hpp"

namespace qrmlab::semlab {

// One modified structural assignment. Interventions on the same seed share
// the exogenous noise draws with the unintervened domain, so paired
// counterfactual datasets line up row by row.
struct Intervention {
  enum class Target { x1, x2 };
  enum class Kind { hard, shift, noise_scale, scale };

  Target target;
  Kind kind;
  double value;
};

// Environment parameters for the linear SEM
//   X1 <- N1,  Y <- X1 + N_Y,  X2 <- Y + N2,   N_j ~ Normal(0, sigma_j^2).
// Fields are standard deviations, not variances.
struct DomainSpec {
  double sigma1 = 1.0;
  double sigmaY = M_SQRT2;  // sigma_Y^2 = 2
  double sigma2 = 1.0;
  std::optional<Intervention> intervention;
};

struct EnvironmentSet {
  std::vector<DomainSpec> domains;
  std::uint64_t meta_seed = 0;

  std::size_t size() const { return domains.size(); }
};

struct DomainDataset {
  std::size_t cols = 0;
  std::vector<double> covariates;  // row-major, rows() x cols
  std::vector<double> labels;

  std::size_t rows() const { return labels.size(); }
  double x(std::size_t i, std::size_t j) const { return covariates[i * cols + j]; }
};

// Two binary +/-1 features predicting a balanced binary label: "shape"
// agrees with the label at a fixed rate, "color" at a per-domain rate.
struct ColorShapeSpec {
  double p_color = 0.9;
  double p_shape = 0.75;
};

// The meta-distribution the experiments draw domains from: sigma1 and
// sigmaY fixed, sigma2 ~ LogNormal(sigma2_mu, sigma2_sigma).
struct EnvironmentFamily {
  double sigma1 = 1.0;
  double sigmaY = M_SQRT2;
  double sigma2_mu = 0.0;
  double sigma2_sigma = 0.5;
};

// m domains sharing sigma1 and sigmaY, with sigma2 drawn independently
// from LogNormal(sigma2_mu, sigma2_sigma).
EnvironmentSet sample_environments(std::size_t m, double sigma2_mu,
                                   double sigma2_sigma, double sigma1,
                                   double sigmaY, std::uint64_t seed);

EnvironmentSet sample_environments(std::size_t m, const EnvironmentFamily& family,
                                   std::uint64_t seed);

DomainDataset generate_data(const DomainSpec& spec, std::size_t n,
                            std::uint64_t seed,
                            parallel::Exec exec = parallel::default_exec());

DomainDataset generate_color_shape(const ColorShapeSpec& spec, std::size_t n,
                                   std::uint64_t seed,
                                   parallel::Exec exec = parallel::default_exec());

// Population MSE of the linear predictor (beta1, beta2) on the plain SEM:
// (b1+b2-1)^2 s1^2 + (b2-1)^2 sY^2 + b2^2 s2^2. Domains with an
// intervention descriptor are not covered by the closed form and throw
// std::invalid_argument; use sampled risks there.
double analytic_risk(double beta1, double beta2, const DomainSpec& spec);

std::array<double, 2> analytic_risk_gradient(double beta1, double beta2,
                                             const DomainSpec& spec);

// Per-domain covariate second moments E[X X^T] and noise cross moments
// E[N X] (N the label noise), the coefficients of the excess-risk form.
struct DomainMoments {
  std::size_t dim = 0;
  std::vector<double> second_moment_xx;  // row-major dim x dim, symmetric
  std::vector<double> cross_moment_xn;   // length dim
};

// Analytic moments of the built-in SEM, interventions included.
DomainMoments domain_moments(const DomainSpec& spec);

// delta^T E[X X^T] delta + 2 delta^T E[N X], the excess risk of a linear
// predictor offset by delta from the causal coefficients.
double excess_risk(std::span<const double> delta, const DomainMoments& moments);
std::vector<double> excess_risk(std::span<const double> delta,
                                std::span<const DomainMoments> moments);

struct UniquenessResult {
  bool unique = true;
  std::optional<std::vector<double>> witness;  // unit vector, set when not unique
  double residual = 0.0;                       // best residual found
  bool inconclusive = false;                   // residual within 100x tolerance
};

// Numerically decides whether the excess-risk system (first form <= 0, all
// forms equal) admits a nonzero solution: multi-start projected
// subgradient search on the unit sphere for
//   r(x) = max(form_1, 0) + sum_{i<j} |form_i - form_j|,
// declaring non-uniqueness when a residual below tolerance * scale is
// found, where scale is the largest moment magnitude.
UniquenessResult verify_unique_invariant_minimum(
    std::span<const DomainMoments> moments, double tolerance = 1e-8,
    int restarts = 64);

// CSV export, header "x1,x2,y" (or "color,shape,y"), one row per sample,
// round-trip float formatting.
void write_dataset_csv(const DomainDataset& data, const std::string& path,
                       std::span<const std::string> column_names);

}  // namespace qrmlab::semlab
