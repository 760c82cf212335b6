#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qrmlab/numkit.hpp"
#include "qrmlab/riskdist.hpp"
#include "qrmlab/semlab.hpp"

namespace qrmlab::trainer {

struct Predictor {
  enum class Link { identity, logistic };

  std::vector<double> weights;
  std::optional<double> bias;
  Link link = Link::identity;

  std::size_t param_count() const { return weights.size() + (bias ? 1 : 0); }
};

struct ErmObjective {};

struct EqrmObjective {
  numkit::AlphaLevel alpha;
  riskdist::EstimatorKind kind = riskdist::EstimatorKind::kde;
  riskdist::BandwidthRule rule = riskdist::BandwidthRule::gaussian_optimal();
  bool h_stop_gradient = false;
};

struct VrexObjective {
  double penalty;  // >= 0
};

struct WorstCaseObjective {};

using Objective =
    std::variant<ErmObjective, EqrmObjective, VrexObjective, WorstCaseObjective>;

struct RiskMode {
  enum class Kind { analytic, sampled };

  Kind kind = Kind::analytic;
  std::size_t samples_per_domain = 0;

  static RiskMode analytic() { return {Kind::analytic, 0}; }
  static RiskMode sampled(std::size_t n) { return {Kind::sampled, n}; }
};

// A training-domain collection: linear-SEM environments with squared loss,
// or color/shape domains with logistic loss.
using Environments =
    std::variant<semlab::EnvironmentSet, std::vector<semlab::ColorShapeSpec>>;

struct TrainConfig {
  double learning_rate = 0.05;
  int steps = 1000;
  int pretrain_steps = 0;  // ERM warm-up before the target objective
  bool cosine_anneal = false;
  std::optional<double> post_pretrain_lr;
  std::uint64_t seed = 0;
  RiskMode risk_mode = RiskMode::analytic();
};

struct TrajectoryRow {
  int step;
  double objective;  // value of the active-phase objective before the update
  double mean_risk;
  double std_risk;
};

using Trajectory = std::vector<TrajectoryRow>;

struct TrainResult {
  Predictor predictor;
  Trajectory trajectory;
};

// Raised when the objective exceeds 1e6 x its initial value.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-domain risks of the predictor: population MSE in analytic mode
// (plain SEM only), mean loss over freshly generated data in sampled mode.
// Sampled data is a deterministic function of (seed, domain index).
riskdist::RiskVector domain_risks(const Predictor& predictor,
                                  const Environments& envs,
                                  const RiskMode& mode, std::uint64_t seed);

double objective_value(const Objective& objective,
                       const riskdist::RiskVector& risks);

// d(objective)/d(parameters) via the chain rule: the risk-space weights of
// the objective times the per-domain risk gradients.
std::vector<double> objective_gradient(const Objective& objective,
                                       const Predictor& predictor,
                                       const Environments& envs,
                                       const RiskMode& mode,
                                       std::uint64_t seed);

// Plain gradient descent from a zero-initialized predictor:
// pretrain_steps of ERM at learning_rate, then steps of the target
// objective at post_pretrain_lr (when set), cosine-annealed if requested.
// Deterministic given config.seed.
TrainResult train(const Environments& envs, const Objective& objective,
                  const TrainConfig& config);

void write_trajectory_csv(const Trajectory& trajectory, const std::string& path);

// Mean loss of the predictor on one dataset (squared error or
// cross-entropy, by link).
double dataset_risk(const semlab::DomainDataset& data, const Predictor& p);

// Fraction of rows whose decision matches the label (logistic link).
double dataset_accuracy(const semlab::DomainDataset& data, const Predictor& p);

}  // namespace qrmlab::trainer
