#include "qrmlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrmlab/csv.hpp"
#include "qrmlab/parallel.hpp"

namespace qrmlab::trainer {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double raw_score(const semlab::DomainDataset& data, const Predictor& p,
                 std::size_t row) {
  double z = p.bias.value_or(0.0);
  for (std::size_t j = 0; j < data.cols; ++j) {
    z += p.weights[j] * data.x(row, j);
  }
  return z;
}

void check_predictor(const semlab::DomainDataset& data, const Predictor& p) {
  if (p.weights.size() != data.cols) {
    throw std::invalid_argument("predictor/covariate dimension mismatch");
  }
}

// Mean loss and its parameter gradient in one pass; chunked so the
// accumulation order is fixed regardless of threading above it.
struct RiskAndGrad {
  double risk;
  std::vector<double> grad;
};

RiskAndGrad dataset_risk_and_gradient(const semlab::DomainDataset& data,
                                      const Predictor& p) {
  check_predictor(data, p);
  const std::size_t n = data.rows();
  const std::size_t np = p.param_count();
  double loss = 0.0;
  std::vector<double> grad(np, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = raw_score(data, p, i);
    const double y = data.labels[i];
    double dz;  // d(loss)/dz for this row
    if (p.link == Predictor::Link::identity) {
      const double r = z - y;
      loss += r * r;
      dz = 2.0 * r;
    } else {
      loss += softplus(z) - y * z;
      dz = sigmoid(z) - y;
    }
    for (std::size_t j = 0; j < data.cols; ++j) {
      grad[j] += dz * data.x(i, j);
    }
    if (p.bias) grad[data.cols] += dz;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& g : grad) g *= inv_n;
  return {loss * inv_n, std::move(grad)};
}

// One domain's risk (and optionally gradient) under the requested mode.
// Sampled data is regenerated deterministically from (seed, domain index)
// unless a materialized dataset is supplied.
struct DomainEval {
  double risk;
  std::vector<double> grad;  // empty when gradients were not requested
};

DomainEval eval_sem_domain(const Predictor& p, const semlab::DomainSpec& spec,
                           const RiskMode& mode, std::uint64_t seed,
                           std::size_t domain_index,
                           const semlab::DomainDataset* materialized,
                           bool want_grad) {
  if (p.link != Predictor::Link::identity) {
    throw std::invalid_argument("SEM environments use the identity link");
  }
  if (mode.kind == RiskMode::Kind::analytic) {
    if (p.weights.size() != 2) {
      throw std::invalid_argument("analytic risks need a 2-feature predictor");
    }
    const double b = p.bias.value_or(0.0);
    DomainEval out;
    out.risk = semlab::analytic_risk(p.weights[0], p.weights[1], spec) + b * b;
    if (want_grad) {
      const auto g = semlab::analytic_risk_gradient(p.weights[0], p.weights[1], spec);
      out.grad = {g[0], g[1]};
      if (p.bias) out.grad.push_back(2.0 * b);
    }
    return out;
  }
  semlab::DomainDataset local;
  const semlab::DomainDataset* data = materialized;
  if (data == nullptr) {
    local = semlab::generate_data(spec, mode.samples_per_domain,
                                  numkit::mix_seed(seed, domain_index),
                                  parallel::Exec::serial);
    data = &local;
  }
  if (!want_grad) {
    return {dataset_risk(*data, p), {}};
  }
  auto rg = dataset_risk_and_gradient(*data, p);
  return {rg.risk, std::move(rg.grad)};
}

DomainEval eval_color_shape_domain(const Predictor& p,
                                   const semlab::ColorShapeSpec& spec,
                                   const RiskMode& mode, std::uint64_t seed,
                                   std::size_t domain_index,
                                   const semlab::DomainDataset* materialized,
                                   bool want_grad) {
  if (p.link != Predictor::Link::logistic) {
    throw std::invalid_argument("color/shape environments use the logistic link");
  }
  if (mode.kind != RiskMode::Kind::sampled) {
    throw std::invalid_argument("color/shape risks have no analytic mode");
  }
  semlab::DomainDataset local;
  const semlab::DomainDataset* data = materialized;
  if (data == nullptr) {
    local = semlab::generate_color_shape(spec, mode.samples_per_domain,
                                         numkit::mix_seed(seed, domain_index),
                                         parallel::Exec::serial);
    data = &local;
  }
  if (!want_grad) {
    return {dataset_risk(*data, p), {}};
  }
  auto rg = dataset_risk_and_gradient(*data, p);
  return {rg.risk, std::move(rg.grad)};
}

std::size_t domain_count(const Environments& envs) {
  return std::visit([](const auto& e) -> std::size_t {
    using T = std::decay_t<decltype(e)>;
    if constexpr (std::is_same_v<T, semlab::EnvironmentSet>) {
      return e.domains.size();
    } else {
      return e.size();
    }
  }, envs);
}

// Evaluates all domains, optionally against pre-materialized datasets.
// Parallel across domains; each slot is written by exactly one task.
std::vector<DomainEval> eval_domains(
    const Predictor& p, const Environments& envs, const RiskMode& mode,
    std::uint64_t seed, const std::vector<semlab::DomainDataset>* materialized,
    bool want_grad) {
  const std::size_t m = domain_count(envs);
  if (m == 0) {
    throw std::domain_error("domain_risks: no environments");
  }
  std::vector<DomainEval> evals(m);
  std::vector<std::exception_ptr> errors(m);
  parallel::for_each_index(m, [&](std::size_t i) {
    try {
      const semlab::DomainDataset* data =
          materialized ? &(*materialized)[i] : nullptr;
      if (const auto* sem = std::get_if<semlab::EnvironmentSet>(&envs)) {
        evals[i] = eval_sem_domain(p, sem->domains[i], mode, seed, i, data, want_grad);
      } else {
        const auto& specs = std::get<std::vector<semlab::ColorShapeSpec>>(envs);
        evals[i] = eval_color_shape_domain(p, specs[i], mode, seed, i, data, want_grad);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return evals;
}

std::vector<double> risk_weights(const Objective& objective,
                                 const riskdist::RiskVector& risks) {
  const std::size_t m = risks.size();
  return std::visit(
      [&](const auto& obj) -> std::vector<double> {
        using T = std::decay_t<decltype(obj)>;
        if constexpr (std::is_same_v<T, ErmObjective>) {
          return std::vector<double>(m, 1.0 / static_cast<double>(m));
        } else if constexpr (std::is_same_v<T, WorstCaseObjective>) {
          // Subgradient of the max; ties broken by lowest domain index.
          std::vector<double> w(m, 0.0);
          std::size_t arg = 0;
          for (std::size_t i = 1; i < m; ++i) {
            if (risks[i] > risks[arg]) arg = i;
          }
          w[arg] = 1.0;
          return w;
        } else if constexpr (std::is_same_v<T, VrexObjective>) {
          const auto& v = risks.values();
          const double mu =
              std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(m);
          std::vector<double> w(m);
          for (std::size_t i = 0; i < m; ++i) {
            w[i] = 1.0 + 2.0 * obj.penalty * (v[i] - mu) /
                             (static_cast<double>(m) - 1.0);
          }
          return w;
        } else {
          return riskdist::quantile_gradient(risks, obj.alpha, obj.kind,
                                             obj.rule, obj.h_stop_gradient);
        }
      },
      objective);
}

Predictor initial_predictor(const Environments& envs) {
  Predictor p;
  p.weights.assign(2, 0.0);
  p.link = std::holds_alternative<semlab::EnvironmentSet>(envs)
               ? Predictor::Link::identity
               : Predictor::Link::logistic;
  return p;
}

std::vector<semlab::DomainDataset> materialize(const Environments& envs,
                                               const RiskMode& mode,
                                               std::uint64_t seed) {
  const std::size_t m = domain_count(envs);
  std::vector<semlab::DomainDataset> data(m);
  std::vector<std::exception_ptr> errors(m);
  parallel::for_each_index(m, [&](std::size_t i) {
    try {
      if (const auto* sem = std::get_if<semlab::EnvironmentSet>(&envs)) {
        data[i] = semlab::generate_data(sem->domains[i], mode.samples_per_domain,
                                        numkit::mix_seed(seed, i),
                                        parallel::Exec::serial);
      } else {
        const auto& specs = std::get<std::vector<semlab::ColorShapeSpec>>(envs);
        data[i] = semlab::generate_color_shape(specs[i], mode.samples_per_domain,
                                               numkit::mix_seed(seed, i),
                                               parallel::Exec::serial);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return data;
}

}  // namespace

double dataset_risk(const semlab::DomainDataset& data, const Predictor& p) {
  check_predictor(data, p);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double z = raw_score(data, p, i);
    const double y = data.labels[i];
    if (p.link == Predictor::Link::identity) {
      loss += (z - y) * (z - y);
    } else {
      loss += softplus(z) - y * z;
    }
  }
  return loss / static_cast<double>(data.rows());
}

double dataset_accuracy(const semlab::DomainDataset& data, const Predictor& p) {
  check_predictor(data, p);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const bool predicted = raw_score(data, p, i) >= 0.0;
    if (predicted == (data.labels[i] >= 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.rows());
}

riskdist::RiskVector domain_risks(const Predictor& predictor,
                                  const Environments& envs,
                                  const RiskMode& mode, std::uint64_t seed) {
  auto evals = eval_domains(predictor, envs, mode, seed, nullptr, false);
  std::vector<double> risks(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) risks[i] = evals[i].risk;
  return riskdist::RiskVector(std::move(risks));
}

double objective_value(const Objective& objective,
                       const riskdist::RiskVector& risks) {
  const auto& v = risks.values();
  const auto m = static_cast<double>(v.size());
  return std::visit(
      [&](const auto& obj) -> double {
        using T = std::decay_t<decltype(obj)>;
        if constexpr (std::is_same_v<T, ErmObjective>) {
          return std::accumulate(v.begin(), v.end(), 0.0) / m;
        } else if constexpr (std::is_same_v<T, WorstCaseObjective>) {
          return *std::max_element(v.begin(), v.end());
        } else if constexpr (std::is_same_v<T, VrexObjective>) {
          const double mu = std::accumulate(v.begin(), v.end(), 0.0) / m;
          double var = 0.0;
          for (double x : v) var += (x - mu) * (x - mu);
          var /= (m - 1.0);
          return m * mu + obj.penalty * var;
        } else {
          return riskdist::icdf(riskdist::fit(risks, obj.kind, obj.rule),
                                obj.alpha);
        }
      },
      objective);
}

namespace {

struct StepEval {
  riskdist::RiskVector risks;
  std::vector<double> grad;
};

StepEval gradient_impl(const Objective& objective, const Predictor& predictor,
                       const Environments& envs, const RiskMode& mode,
                       std::uint64_t seed,
                       const std::vector<semlab::DomainDataset>* materialized) {
  auto evals = eval_domains(predictor, envs, mode, seed, materialized, true);
  std::vector<double> values(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) values[i] = evals[i].risk;
  riskdist::RiskVector risks(std::move(values));

  const auto w = risk_weights(objective, risks);
  std::vector<double> grad(predictor.param_count(), 0.0);
  for (std::size_t i = 0; i < evals.size(); ++i) {
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] += w[i] * evals[i].grad[k];
    }
  }
  return {std::move(risks), std::move(grad)};
}

}  // namespace

std::vector<double> objective_gradient(const Objective& objective,
                                       const Predictor& predictor,
                                       const Environments& envs,
                                       const RiskMode& mode,
                                       std::uint64_t seed) {
  return gradient_impl(objective, predictor, envs, mode, seed, nullptr).grad;
}

TrainResult train(const Environments& envs, const Objective& objective,
                  const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) {
    throw std::domain_error("train: learning_rate must be > 0");
  }
  if (config.post_pretrain_lr && !(*config.post_pretrain_lr > 0.0)) {
    throw std::domain_error("train: post_pretrain_lr must be > 0");
  }
  if (config.steps < 0 || config.pretrain_steps < 0) {
    throw std::domain_error("train: step counts must be >= 0");
  }

  Predictor predictor = initial_predictor(envs);

  std::vector<semlab::DomainDataset> datasets;
  const std::vector<semlab::DomainDataset>* materialized = nullptr;
  if (config.risk_mode.kind == RiskMode::Kind::sampled) {
    if (config.risk_mode.samples_per_domain == 0) {
      throw std::domain_error("train: sampled mode needs samples_per_domain > 0");
    }
    datasets = materialize(envs, config.risk_mode, config.seed);
    materialized = &datasets;
  }

  TrainResult result;
  const Objective erm = ErmObjective{};
  const double main_lr = config.post_pretrain_lr.value_or(config.learning_rate);

  double initial_value = 0.0;
  bool have_initial = false;

  auto run_phase = [&](const Objective& phase_obj, int phase_steps, int step_base,
                       double base_lr, bool anneal) {
    for (int t = 0; t < phase_steps; ++t) {
      auto [risks, grad] = gradient_impl(phase_obj, predictor, envs,
                                         config.risk_mode, config.seed,
                                         materialized);
      const double value = objective_value(phase_obj, risks);
      const auto stats = numkit::summary_stats(risks.values());
      result.trajectory.push_back(
          TrajectoryRow{step_base + t, value, stats.mean, stats.sample_std});
      if (!have_initial) {
        initial_value = value;
        have_initial = true;
      } else if (value > 1e6 * std::max(std::abs(initial_value), 1e-12)) {
        throw DivergenceError("train: objective exceeded 1e6 x initial value");
      }
      double lr = base_lr;
      if (anneal && phase_steps > 0) {
        lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t) /
                                    static_cast<double>(phase_steps)));
      }
      for (std::size_t k = 0; k < predictor.weights.size(); ++k) {
        predictor.weights[k] -= lr * grad[k];
      }
      if (predictor.bias) {
        *predictor.bias -= lr * grad[predictor.weights.size()];
      }
    }
  };

  run_phase(erm, config.pretrain_steps, 0, config.learning_rate, false);
  run_phase(objective, config.steps, config.pretrain_steps, main_lr,
            config.cosine_anneal);

  // Final state, recorded under the objective of the last active phase.
  const Objective& final_obj =
      (config.steps > 0 || config.pretrain_steps == 0) ? objective : erm;
  const auto final_risks =
      domain_risks(predictor, envs, config.risk_mode, config.seed);
  const auto stats = numkit::summary_stats(final_risks.values());
  result.trajectory.push_back(TrajectoryRow{config.pretrain_steps + config.steps,
                                            objective_value(final_obj, final_risks),
                                            stats.mean, stats.sample_std});
  result.predictor = std::move(predictor);
  return result;
}

void write_trajectory_csv(const Trajectory& trajectory, const std::string& path) {
  csv::Table table;
  table.header = {"step", "objective", "mean_risk", "std_risk"};
  table.rows.reserve(trajectory.size());
  for (const auto& row : trajectory) {
    table.rows.push_back({std::to_string(row.step), csv::format_double(row.objective),
                          csv::format_double(row.mean_risk),
                          csv::format_double(row.std_risk)});
  }
  csv::write(path, table);
}

}  // namespace qrmlab::trainer
