#include "qrmlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "qrmlab/build_info.hpp"
#include "qrmlab/csv.hpp"
#include "qrmlab/evalkit.hpp"
#include "qrmlab/numkit.hpp"
#include "qrmlab/parallel.hpp"
#include "qrmlab/riskdist.hpp"
#include "qrmlab/svg.hpp"
#include "qrmlab/trainer.hpp"

namespace fs = std::filesystem;

namespace qrmlab::cli {

namespace {

// ---------------------------------------------------------------------------
// Config file handling: flat "key = value" lines under [section] headers,
// '#' comments. A manifest.csv written by a previous run parses to the same
// structure, so manifests can be re-run directly.

struct RawConfig {
  // section -> key -> value; insertion order kept separately for manifests.
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::vector<std::pair<std::string, std::string>> order;  // (section, key)
  mutable std::set<std::pair<std::string, std::string>> consumed;

  bool has(const std::string& section, const std::string& key) const {
    auto sit = sections.find(section);
    return sit != sections.end() && sit->second.count(key) > 0;
  }

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const {
    auto sit = sections.find(section);
    if (sit == sections.end()) return {};
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return {};
    consumed.insert({section, key});
    return kit->second;
  }

  std::string require(const std::string& section, const std::string& key) const {
    auto v = get(section, key);
    if (!v) {
      throw ConfigError("config: missing required key [" + section + "] " + key);
    }
    return *v;
  }

  void check_all_consumed() const {
    for (const auto& [section, keys] : sections) {
      for (const auto& [key, value] : keys) {
        if (!consumed.count({section, key})) {
          throw ConfigError("config: unknown key [" + section + "] " + key);
        }
      }
    }
  }

  std::vector<std::string> section_names(const std::string& prefix) const {
    std::vector<std::string> names;
    for (const auto& [section, keys] : sections) {
      if (section.rfind(prefix, 0) == 0) names.push_back(section);
    }
    return names;
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

void insert_entry(RawConfig& cfg, const std::string& section,
                  const std::string& key, const std::string& value) {
  if (!cfg.sections[section].emplace(key, value).second) {
    throw ConfigError("config: duplicate key [" + section + "] " + key);
  }
  cfg.order.emplace_back(section, key);
}

RawConfig parse_manifest(const std::string& path) {
  RawConfig cfg;
  const auto table = csv::read(path);
  if (table.header != std::vector<std::string>{"key", "value"}) {
    throw ConfigError("manifest: expected key,value header");
  }
  for (const auto& row : table.rows) {
    if (row.size() != 2) {
      throw ConfigError("manifest: malformed row");
    }
    const std::string& key = row[0];
    if (key.rfind("config.", 0) != 0) continue;  // informational rows
    const std::string rest = key.substr(7);
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos) {
      throw ConfigError("manifest: malformed config key '" + key + "'");
    }
    insert_entry(cfg, rest.substr(0, dot), rest.substr(dot + 1), row[1]);
  }
  if (cfg.sections.empty()) {
    throw ConfigError("manifest: no config entries");
  }
  return cfg;
}

RawConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("config: cannot open '" + path + "'");
  }
  std::string first_line;
  std::getline(in, first_line);
  if (trim(first_line) == "key,value") {
    return parse_manifest(path);
  }
  in.clear();
  in.seekg(0);

  RawConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config: bad section header at line " +
                          std::to_string(lineno));
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("config: empty section name at line " +
                          std::to_string(lineno));
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw ConfigError("config: expected 'key = value' at line " +
                        std::to_string(lineno));
    }
    const std::string key = trim(t.substr(0, eq));
    if (!valid_key(key)) {
      throw ConfigError("config: bad key name at line " + std::to_string(lineno));
    }
    insert_entry(cfg, section, key, trim(t.substr(eq + 1)));
  }
  return cfg;
}

// Typed getters ------------------------------------------------------------

double to_double(const std::string& section, const std::string& key,
                 const std::string& v) {
  try {
    return csv::parse_double(v);
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " is not a number");
  }
}

double get_double(const RawConfig& cfg, const std::string& section,
                  const std::string& key, double fallback) {
  auto v = cfg.get(section, key);
  return v ? to_double(section, key, *v) : fallback;
}

std::uint64_t get_u64(const RawConfig& cfg, const std::string& section,
                      const std::string& key, std::uint64_t fallback) {
  auto v = cfg.get(section, key);
  if (!v) return fallback;
  try {
    return std::stoull(*v);
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key +
                      " is not a non-negative integer");
  }
}

std::size_t get_size(const RawConfig& cfg, const std::string& section,
                     const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(get_u64(cfg, section, key, fallback));
}

bool get_bool(const RawConfig& cfg, const std::string& section,
              const std::string& key, bool fallback) {
  auto v = cfg.get(section, key);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw ConfigError("config: [" + section + "] " + key + " must be true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) parts.push_back(t);
  }
  return parts;
}

std::vector<double> get_double_list(const RawConfig& cfg, const std::string& section,
                                    const std::string& key) {
  auto v = cfg.get(section, key);
  if (!v) return {};
  std::vector<double> out;
  for (const auto& item : split_list(*v)) {
    out.push_back(to_double(section, key, item));
  }
  return out;
}

std::vector<std::size_t> get_size_list(const RawConfig& cfg,
                                       const std::string& section,
                                       const std::string& key) {
  std::vector<std::size_t> out;
  for (double v : get_double_list(cfg, section, key)) {
    if (v < 0 || v != std::floor(v)) {
      throw ConfigError("config: [" + section + "] " + key +
                        " must list non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Parsed experiment pieces --------------------------------------------------

struct AlphaSpec {
  numkit::AlphaLevel level;
  double log1m;  // ln(1-alpha), always filled for reporting
  std::string label;
};

std::vector<AlphaSpec> parse_alphas(const RawConfig& cfg) {
  std::vector<AlphaSpec> specs;
  for (double a : get_double_list(cfg, "objective", "alphas")) {
    if (!(a >= 0.0 && a < 1.0)) {
      throw ConfigError("config: [objective] alphas must lie in [0, 1)");
    }
    specs.push_back({numkit::AlphaLevel::probability(a), std::log1p(-a),
                     csv::format_double(a)});
  }
  for (double l : get_double_list(cfg, "objective", "log1m_alphas")) {
    if (!(l < 0.0)) {
      throw ConfigError("config: [objective] log1m_alphas must be negative");
    }
    specs.push_back({numkit::AlphaLevel::log_one_minus(l), l,
                     "ln1m" + csv::format_double(l)});
  }
  return specs;
}

riskdist::EstimatorKind parse_estimator(const RawConfig& cfg) {
  const auto v = cfg.get("objective", "estimator").value_or("kde");
  if (v == "kde") return riskdist::EstimatorKind::kde;
  if (v == "gaussian") return riskdist::EstimatorKind::gaussian;
  if (v == "empirical") return riskdist::EstimatorKind::empirical;
  throw ConfigError("config: unknown estimator '" + v + "'");
}

riskdist::BandwidthRule parse_bandwidth(const RawConfig& cfg) {
  const auto v = cfg.get("objective", "bandwidth").value_or("gaussian-optimal");
  if (v == "gaussian-optimal") return riskdist::BandwidthRule::gaussian_optimal();
  if (v == "silverman") return riskdist::BandwidthRule::silverman();
  if (v == "median-heuristic") return riskdist::BandwidthRule::median_heuristic();
  if (v.rfind("fixed:", 0) == 0) {
    return riskdist::BandwidthRule::fixed(
        to_double("objective", "bandwidth", v.substr(6)));
  }
  throw ConfigError("config: unknown bandwidth rule '" + v + "'");
}

semlab::EnvironmentFamily parse_family(const RawConfig& cfg) {
  semlab::EnvironmentFamily family;
  family.sigma1 = get_double(cfg, "environments", "sigma1", family.sigma1);
  family.sigmaY = get_double(cfg, "environments", "sigmaY", family.sigmaY);
  family.sigma2_mu = get_double(cfg, "environments", "sigma2_mu", family.sigma2_mu);
  family.sigma2_sigma =
      get_double(cfg, "environments", "sigma2_sigma", family.sigma2_sigma);
  return family;
}

trainer::TrainConfig parse_train(const RawConfig& cfg, std::uint64_t seed) {
  trainer::TrainConfig tc;
  tc.learning_rate = get_double(cfg, "train", "learning_rate", 0.05);
  tc.steps = static_cast<int>(get_u64(cfg, "train", "steps", 2000));
  tc.pretrain_steps = static_cast<int>(get_u64(cfg, "train", "pretrain_steps", 200));
  tc.cosine_anneal = get_bool(cfg, "train", "cosine_anneal", false);
  if (cfg.has("train", "post_pretrain_lr")) {
    tc.post_pretrain_lr = get_double(cfg, "train", "post_pretrain_lr", 0.0);
  }
  const auto mode = cfg.get("train", "risk_mode").value_or("analytic");
  if (mode == "analytic") {
    tc.risk_mode = trainer::RiskMode::analytic();
  } else if (mode == "sampled") {
    tc.risk_mode = trainer::RiskMode::sampled(
        get_size(cfg, "train", "samples_per_domain", 10000));
  } else {
    throw ConfigError("config: unknown risk_mode '" + mode + "'");
  }
  tc.seed = seed;
  return tc;
}

// Artifact collection with cleanup-on-failure.
struct ArtifactSink {
  fs::path dir;
  std::vector<fs::path> written;

  explicit ArtifactSink(const std::string& output_dir) : dir(output_dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
      throw ConfigError("config: cannot create output directory '" + output_dir +
                        "'");
    }
  }

  std::string path(const std::string& name) {
    const fs::path p = dir / name;
    written.push_back(p);
    return p.string();
  }

  void discard_written() {
    for (const auto& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

void write_manifest(const RawConfig& cfg, ArtifactSink& sink,
                    std::uint64_t resolved_seed) {
  csv::Table table;
  table.header = {"key", "value"};
  table.rows.push_back({"build_id", std::string(kBuildId)});
  table.rows.push_back({"seed", std::to_string(resolved_seed)});
  for (const auto& [section, key] : cfg.order) {
    std::string value = cfg.sections.at(section).at(key);
    if (section == "experiment" && key == "seed") {
      value = std::to_string(resolved_seed);
    }
    table.rows.push_back({"config." + section + "." + key, value});
  }
  csv::write(sink.path("manifest.csv"), table);
}

// Per-cell stream tags, per the (kind, cell index) derivation.
std::uint64_t cell_seed(std::uint64_t master, const std::string& kind,
                        std::uint64_t cell) {
  return numkit::mix_seed(master, numkit::mix_seed(numkit::hash64(kind), cell));
}

// ---------------------------------------------------------------------------
// Experiment kinds

struct SemRunContext {
  semlab::EnvironmentFamily family;
  std::size_t m;
  std::vector<AlphaSpec> alphas;
  riskdist::EstimatorKind estimator;
  riskdist::BandwidthRule rule;
  bool h_stop_gradient;
  trainer::TrainConfig train_config;
  std::uint64_t master;
  std::string kind;
};

SemRunContext sem_context(const RawConfig& cfg, std::uint64_t master,
                          const std::string& kind) {
  SemRunContext ctx{parse_family(cfg),
                    get_size(cfg, "environments", "m", 100),
                    parse_alphas(cfg),
                    parse_estimator(cfg),
                    parse_bandwidth(cfg),
                    get_bool(cfg, "objective", "h_stop_gradient", false),
                    parse_train(cfg, master),
                    master,
                    kind};
  if (ctx.alphas.empty()) {
    throw ConfigError("config: [objective] needs alphas and/or log1m_alphas");
  }
  return ctx;
}

std::vector<trainer::TrainResult> train_cells(const SemRunContext& ctx,
                                              const semlab::EnvironmentSet& envs) {
  std::vector<trainer::TrainResult> results(ctx.alphas.size());
  std::vector<std::exception_ptr> errors(ctx.alphas.size());
  parallel::for_each_index(ctx.alphas.size(), [&](std::size_t i) {
    try {
      trainer::EqrmObjective obj{ctx.alphas[i].level, ctx.estimator, ctx.rule,
                                 ctx.h_stop_gradient};
      trainer::TrainConfig tc = ctx.train_config;
      tc.seed = cell_seed(ctx.master, ctx.kind, i);
      results[i] = trainer::train(envs, trainer::Objective(obj), tc);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return results;
}

void write_trajectories(const SemRunContext& ctx,
                        const std::vector<trainer::TrainResult>& results,
                        ArtifactSink& sink) {
  for (std::size_t i = 0; i < results.size(); ++i) {
    trainer::write_trajectory_csv(
        results[i].trajectory,
        sink.path("trajectory_" + std::to_string(i) + ".csv"));
  }
}

// x position used when plotting against alpha: log10(-ln(1-alpha)).
double alpha_axis(const AlphaSpec& spec) { return std::log10(-spec.log1m); }

void run_fig2c(const RawConfig& cfg, ArtifactSink& sink, std::uint64_t master) {
  const auto ctx = sem_context(cfg, master, "fig2c-coefficients");
  const auto envs = semlab::sample_environments(
      ctx.m, ctx.family, numkit::mix_seed(master, numkit::hash64("envs")));
  const auto results = train_cells(ctx, envs);

  csv::Table table;
  table.header = {"alpha", "log1m_alpha", "beta1", "beta2"};
  svg::Series beta1{"beta1", {}}, beta2{"beta2", {}};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& w = results[i].predictor.weights;
    table.rows.push_back({csv::format_double(ctx.alphas[i].level.alpha()),
                          csv::format_double(ctx.alphas[i].log1m),
                          csv::format_double(w[0]), csv::format_double(w[1])});
    beta1.points.emplace_back(alpha_axis(ctx.alphas[i]), w[0]);
    beta2.points.emplace_back(alpha_axis(ctx.alphas[i]), w[1]);
  }
  csv::write(sink.path("coefficients.csv"), table);
  write_trajectories(ctx, results, sink);

  const svg::Series series[] = {beta1, beta2};
  svg::write_plot(sink.path("coefficients.svg"), series,
                  svg::PlotOptions{"regression coefficients vs alpha",
                                   "log10(-ln(1-alpha))", "coefficient"});
}

void run_fig2a(const RawConfig& cfg, ArtifactSink& sink, std::uint64_t master) {
  const auto ctx = sem_context(cfg, master, "fig2a-frontier");
  const auto levels_cfg = get_double_list(cfg, "eval", "levels");
  std::vector<double> levels(evalkit::kDefaultLevels,
                             evalkit::kDefaultLevels + 7);
  if (!levels_cfg.empty()) levels = levels_cfg;
  const std::size_t test_domains = get_size(cfg, "eval", "test_domains", 2000);

  const auto envs = semlab::sample_environments(
      ctx.m, ctx.family, numkit::mix_seed(master, numkit::hash64("envs")));
  const auto results = train_cells(ctx, envs);

  std::vector<evalkit::TrainedPredictor> trained;
  for (std::size_t i = 0; i < results.size(); ++i) {
    trained.push_back({ctx.alphas[i].level.alpha(), results[i].predictor});
  }
  const auto fresh = semlab::sample_environments(
      test_domains, ctx.family, numkit::mix_seed(master, numkit::hash64("test")));
  const auto cells = evalkit::frontier_experiment(trained, fresh, levels);

  csv::Table table;
  table.header = {"alpha_train", "level", "risk"};
  std::vector<svg::Series> series(trained.size());
  for (std::size_t i = 0; i < trained.size(); ++i) {
    series[i].name = "alpha=" + ctx.alphas[i].label;
  }
  for (const auto& cell : cells) {
    table.rows.push_back({csv::format_double(cell.alpha_train),
                          csv::format_double(cell.level),
                          csv::format_double(cell.risk)});
  }
  for (std::size_t i = 0, k = 0; i < trained.size(); ++i) {
    for (double level : levels) {
      series[i].points.emplace_back(level, cells[k++].risk);
    }
  }
  csv::write(sink.path("frontier.csv"), table);
  svg::write_plot(sink.path("frontier.svg"), series,
                  svg::PlotOptions{"test risk quantiles per trained alpha",
                                   "quantile level", "risk"});
}

void run_fig2b(const RawConfig& cfg, ArtifactSink& sink, std::uint64_t master) {
  const auto ctx = sem_context(cfg, master, "fig2b-curves");
  const std::size_t points = get_size(cfg, "eval", "grid_points", 400);
  const bool have_bounds =
      cfg.has("eval", "grid_min") && cfg.has("eval", "grid_max");
  double grid_min = get_double(cfg, "eval", "grid_min", 0.0);
  double grid_max = get_double(cfg, "eval", "grid_max", 0.0);

  const auto envs = semlab::sample_environments(
      ctx.m, ctx.family, numkit::mix_seed(master, numkit::hash64("envs")));
  const auto results = train_cells(ctx, envs);

  std::vector<riskdist::RiskVector> risk_sets;
  for (const auto& result : results) {
    risk_sets.push_back(trainer::domain_risks(
        result.predictor, envs, trainer::RiskMode::analytic(), 0));
  }
  if (!have_bounds) {
    double lo = risk_sets[0][0], hi = risk_sets[0][0];
    for (const auto& risks : risk_sets) {
      for (double r : risks.values()) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
    }
    const double pad = 0.25 * std::max(hi - lo, 1.0);
    grid_min = lo - pad;
    grid_max = hi + pad;
  }

  std::vector<svg::Series> pdfs(results.size()), cdfs(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto curve = evalkit::risk_curve(risk_sets[i], ctx.estimator, ctx.rule,
                                           {grid_min, grid_max, points});
    evalkit::write_curve_csv(curve,
                             sink.path("curve_" + std::to_string(i) + ".csv"));
    pdfs[i].name = cdfs[i].name = "alpha=" + ctx.alphas[i].label;
    for (const auto& point : curve) {
      pdfs[i].points.emplace_back(point.t, point.pdf);
      cdfs[i].points.emplace_back(point.t, point.cdf);
    }
  }
  svg::write_plot(sink.path("pdfs.svg"), pdfs,
                  svg::PlotOptions{"estimated risk distributions", "risk", "density"});
  svg::PlotOptions cdf_opts{"risk-robustness curves", "risk", "P(risk <= t)"};
  cdf_opts.clamp_y01 = true;
  svg::write_plot(sink.path("cdfs.svg"), cdfs, cdf_opts);
}

void run_fig2d(const RawConfig& cfg, ArtifactSink& sink, std::uint64_t master) {
  const auto family = parse_family(cfg);
  const auto alphas = parse_alphas(cfg);
  if (alphas.size() != 1) {
    throw ConfigError("config: fig2d-qq expects exactly one alpha");
  }
  const auto rule = parse_bandwidth(cfg);
  auto m_values = get_size_list(cfg, "eval", "m_values");
  if (m_values.empty()) m_values = {10, 50, 200, 1000};
  const std::size_t m_reference = get_size(cfg, "eval", "m_reference", 1000);
  const std::size_t seeds = get_size(cfg, "eval", "seeds", 20);
  const double beta1 = get_double(cfg, "predictor", "beta1", 0.0);
  const double beta2 = get_double(cfg, "predictor", "beta2", 1.0);

  const auto rows = evalkit::qq_experiment(
      family, beta1, beta2, alphas[0].level, m_values, m_reference, seeds,
      numkit::mix_seed(master, numkit::hash64("fig2d-qq")), rule);

  csv::Table table;
  table.header = {"m", "mean_abs_gap"};
  svg::Series gap{"", {}};
  for (const auto& row : rows) {
    table.rows.push_back(
        {std::to_string(row.m), csv::format_double(row.mean_abs_gap)});
    gap.points.emplace_back(static_cast<double>(row.m), row.mean_abs_gap);
  }
  csv::write(sink.path("qq.csv"), table);
  const svg::Series series[] = {gap};
  svg::write_plot(sink.path("qq.svg"), series,
                  svg::PlotOptions{"quantile estimate vs reference", "m domains",
                                   "mean |q_m - q_ref|"});
}

void run_coverage(const RawConfig& cfg, ArtifactSink& sink, std::uint64_t master) {
  const auto ctx = sem_context(cfg, master, "coverage");
  const std::size_t test_domains = get_size(cfg, "eval", "test_domains", 2000);
  const std::size_t seeds = get_size(cfg, "eval", "seeds", 5);

  struct Cell {
    double predicted_q;
    double fraction;
  };
  std::vector<Cell> cells(ctx.alphas.size() * seeds);
  std::vector<std::exception_ptr> errors(cells.size());
  parallel::for_each_index(cells.size(), [&](std::size_t idx) {
    try {
      const std::size_t a = idx / seeds;
      const std::size_t s = idx % seeds;
      const auto envs = semlab::sample_environments(
          ctx.m, ctx.family,
          numkit::mix_seed(master, numkit::mix_seed(numkit::hash64("envs"), s)));
      trainer::EqrmObjective obj{ctx.alphas[a].level, ctx.estimator, ctx.rule,
                                 ctx.h_stop_gradient};
      trainer::TrainConfig tc = ctx.train_config;
      tc.seed = cell_seed(master, ctx.kind, idx);
      const auto result = trainer::train(envs, trainer::Objective(obj), tc);

      const auto train_risks = trainer::domain_risks(
          result.predictor, envs, trainer::RiskMode::analytic(), 0);
      const double q = riskdist::icdf(
          riskdist::fit(train_risks, ctx.estimator, ctx.rule), ctx.alphas[a].level);

      const auto fresh = semlab::sample_environments(
          test_domains, ctx.family,
          numkit::mix_seed(master, numkit::mix_seed(numkit::hash64("test"), s)));
      const auto test_risks = trainer::domain_risks(
          result.predictor, fresh, trainer::RiskMode::analytic(), 0);
      cells[idx] = Cell{q, evalkit::coverage(test_risks.values(), q)};
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  });
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  csv::Table table;
  table.header = {"alpha", "seed", "predicted_q", "fraction_below"};
  csv::Table mean_table;
  mean_table.header = {"alpha", "mean_coverage"};
  svg::Series mean_series{"mean coverage", {}};
  for (std::size_t a = 0; a < ctx.alphas.size(); ++a) {
    double acc = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& cell = cells[a * seeds + s];
      table.rows.push_back({ctx.alphas[a].label, std::to_string(s),
                            csv::format_double(cell.predicted_q),
                            csv::format_double(cell.fraction)});
      acc += cell.fraction;
    }
    const double mean = acc / static_cast<double>(seeds);
    mean_table.rows.push_back({ctx.alphas[a].label, csv::format_double(mean)});
    mean_series.points.emplace_back(ctx.alphas[a].level.alpha(), mean);
  }
  csv::write(sink.path("coverage.csv"), table);
  csv::write(sink.path("coverage_mean.csv"), mean_table);
  svg::PlotOptions opts{"fresh-domain coverage of the predicted quantile",
                        "alpha", "coverage"};
  opts.identity_line = true;
  const svg::Series series[] = {mean_series};
  svg::write_plot(sink.path("coverage.svg"), series, opts);
}

void run_cmnist_toy(const RawConfig& cfg, ArtifactSink& sink,
                    std::uint64_t master) {
  auto p_colors = get_double_list(cfg, "data", "p_colors");
  if (p_colors.empty()) p_colors = {0.9, 0.8};
  const double p_test = get_double(cfg, "data", "p_test", 0.1);
  const double p_shape = get_double(cfg, "data", "p_shape", 0.75);
  const std::size_t n = get_size(cfg, "data", "samples_per_domain", 10000);
  const std::size_t seeds = get_size(cfg, "data", "seeds", 10);

  auto alphas = parse_alphas(cfg);
  if (alphas.empty()) {
    alphas.push_back(
        {numkit::AlphaLevel::log_one_minus(-1000.0), -1000.0, "ln1m-1000"});
  }
  const auto estimator = parse_estimator(cfg);
  const auto rule = parse_bandwidth(cfg);
  const bool h_stop = get_bool(cfg, "objective", "h_stop_gradient", false);
  trainer::TrainConfig base = parse_train(cfg, master);
  base.risk_mode = trainer::RiskMode::sampled(n);

  std::vector<semlab::ColorShapeSpec> domains;
  for (double p : p_colors) domains.push_back({p, p_shape});
  const trainer::Environments envs{domains};

  // One cell per (seed, objective); objective 0 is ERM, then the alphas.
  const std::size_t variants = 1 + alphas.size();
  std::vector<double> accuracy(seeds * variants);
  std::vector<std::exception_ptr> errors(seeds * variants);
  parallel::for_each_index(seeds * variants, [&](std::size_t idx) {
    try {
      const std::size_t s = idx / variants;
      const std::size_t v = idx % variants;
      trainer::TrainConfig tc = base;
      tc.seed = cell_seed(master, "cmnist-toy", s);  // shared data per seed
      trainer::Objective objective = trainer::ErmObjective{};
      if (v > 0) {
        objective = trainer::EqrmObjective{alphas[v - 1].level, estimator, rule,
                                           h_stop};
      }
      const auto result = trainer::train(envs, objective, tc);
      const auto test = semlab::generate_color_shape(
          {p_test, p_shape}, n,
          numkit::mix_seed(master, numkit::mix_seed(numkit::hash64("test"), s)),
          parallel::Exec::serial);
      accuracy[idx] = trainer::dataset_accuracy(test, result.predictor);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  });
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  csv::Table table;
  table.header = {"objective", "seed", "test_accuracy"};
  csv::Table mean_table;
  mean_table.header = {"objective", "mean_test_accuracy"};
  std::vector<svg::Series> series(variants);
  for (std::size_t v = 0; v < variants; ++v) {
    const std::string name = v == 0 ? "erm" : "eqrm_" + alphas[v - 1].label;
    series[v].name = name;
    double acc = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      table.rows.push_back({name, std::to_string(s),
                            csv::format_double(accuracy[s * variants + v])});
      series[v].points.emplace_back(static_cast<double>(s),
                                    accuracy[s * variants + v]);
      acc += accuracy[s * variants + v];
    }
    mean_table.rows.push_back(
        {name, csv::format_double(acc / static_cast<double>(seeds))});
  }
  csv::write(sink.path("accuracy.csv"), table);
  csv::write(sink.path("accuracy_mean.csv"), mean_table);
  svg::PlotOptions opts{"test accuracy on the held-out color domain", "seed",
                        "accuracy"};
  opts.clamp_y01 = true;
  svg::write_plot(sink.path("accuracy.svg"), series, opts);
}

std::vector<semlab::DomainMoments> parse_verify_domains(const RawConfig& cfg) {
  std::vector<semlab::DomainMoments> moments;
  for (std::size_t i = 1;; ++i) {
    const std::string section = "domain." + std::to_string(i);
    if (!cfg.sections.count(section)) break;
    const auto kind = cfg.get(section, "kind").value_or("sem");
    if (kind == "sem") {
      semlab::DomainSpec spec;
      spec.sigma1 = get_double(cfg, section, "sigma1", 1.0);
      spec.sigmaY = get_double(cfg, section, "sigmaY", M_SQRT2);
      spec.sigma2 = get_double(cfg, section, "sigma2", 1.0);
      if (cfg.has(section, "intervention_target")) {
        semlab::Intervention iv{};
        const auto target = cfg.require(section, "intervention_target");
        if (target == "x1") {
          iv.target = semlab::Intervention::Target::x1;
        } else if (target == "x2") {
          iv.target = semlab::Intervention::Target::x2;
        } else {
          throw ConfigError("config: unknown intervention target '" + target + "'");
        }
        const auto ivkind = cfg.require(section, "intervention_kind");
        if (ivkind == "hard") {
          iv.kind = semlab::Intervention::Kind::hard;
        } else if (ivkind == "shift") {
          iv.kind = semlab::Intervention::Kind::shift;
        } else if (ivkind == "noise-scale") {
          iv.kind = semlab::Intervention::Kind::noise_scale;
        } else if (ivkind == "scale") {
          iv.kind = semlab::Intervention::Kind::scale;
        } else {
          throw ConfigError("config: unknown intervention kind '" + ivkind + "'");
        }
        iv.value = get_double(cfg, section, "intervention_value", 0.0);
        spec.intervention = iv;
      }
      moments.push_back(semlab::domain_moments(spec));
    } else if (kind == "moments") {
      semlab::DomainMoments mom;
      mom.second_moment_xx = get_double_list(cfg, section, "xx");
      mom.cross_moment_xn = get_double_list(cfg, section, "xn");
      mom.dim = mom.cross_moment_xn.size();
      if (mom.dim == 0 || mom.second_moment_xx.size() != mom.dim * mom.dim) {
        throw ConfigError("config: [" + section + "] xx must be dim^2 values");
      }
      moments.push_back(std::move(mom));
    } else {
      throw ConfigError("config: [" + section + "] unknown kind '" + kind + "'");
    }
  }
  if (moments.empty()) {
    throw ConfigError("config: causal-verify needs [domain.1] ... sections");
  }
  return moments;
}

semlab::UniquenessResult run_verifier(const RawConfig& cfg) {
  const auto moments = parse_verify_domains(cfg);
  const double tolerance = get_double(cfg, "verify", "tolerance", 1e-8);
  const int restarts = static_cast<int>(get_u64(cfg, "verify", "restarts", 64));
  return semlab::verify_unique_invariant_minimum(moments, tolerance, restarts);
}

void write_verify_csv(const semlab::UniquenessResult& result,
                      const std::string& path) {
  csv::Table table;
  table.header = {"key", "value"};
  table.rows.push_back({"unique", result.unique ? "true" : "false"});
  table.rows.push_back({"residual", csv::format_double(result.residual)});
  table.rows.push_back({"inconclusive", result.inconclusive ? "true" : "false"});
  if (result.witness) {
    for (std::size_t i = 0; i < result.witness->size(); ++i) {
      table.rows.push_back({"witness_" + std::to_string(i),
                            csv::format_double((*result.witness)[i])});
    }
  }
  csv::write(path, table);
}

void run_causal_verify(const RawConfig& cfg, ArtifactSink& sink) {
  write_verify_csv(run_verifier(cfg), sink.path("verify.csv"));
}

}  // namespace

void run_experiment(const std::string& config_path,
                    std::optional<std::uint64_t> seed_override) {
  const RawConfig cfg = parse_config(config_path);
  const std::string kind = cfg.require("experiment", "kind");
  const std::uint64_t master =
      seed_override.value_or(get_u64(cfg, "experiment", "seed", 0));
  cfg.get("experiment", "seed");  // consumed even when overridden
  const std::string output_dir = cfg.require("experiment", "output_dir");

  ArtifactSink sink(output_dir);
  try {
    write_manifest(cfg, sink, master);
    if (kind == "fig2a-frontier") {
      run_fig2a(cfg, sink, master);
    } else if (kind == "fig2b-curves") {
      run_fig2b(cfg, sink, master);
    } else if (kind == "fig2c-coefficients") {
      run_fig2c(cfg, sink, master);
    } else if (kind == "fig2d-qq") {
      run_fig2d(cfg, sink, master);
    } else if (kind == "coverage") {
      run_coverage(cfg, sink, master);
    } else if (kind == "cmnist-toy") {
      run_cmnist_toy(cfg, sink, master);
    } else if (kind == "causal-verify") {
      run_causal_verify(cfg, sink);
    } else {
      throw ConfigError("config: unknown experiment kind '" + kind + "'");
    }
    cfg.check_all_consumed();
  } catch (...) {
    sink.discard_written();
    throw;
  }
}

PlotKind parse_plot_kind(const std::string& name) {
  if (name == "line") return PlotKind::line;
  if (name == "cdf") return PlotKind::cdf;
  if (name == "pdf") return PlotKind::pdf;
  if (name == "qq") return PlotKind::qq;
  throw ConfigError("plot: unknown kind '" + name + "'");
}

void render_plot(const std::string& csv_path, PlotKind kind,
                 const std::string& svg_path) {
  csv::Table table;
  try {
    table = csv::read(csv_path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (table.header.size() < 2 || table.rows.empty()) {
    throw ConfigError("plot: need at least two columns and one row");
  }
  auto numeric_column = [&](std::size_t col) {
    std::vector<double> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
      if (row.size() != table.header.size()) {
        throw ConfigError("plot: ragged csv row");
      }
      try {
        out.push_back(csv::parse_double(row[col]));
      } catch (const std::exception&) {
        throw ConfigError("plot: non-numeric value in column '" +
                          table.header[col] + "'");
      }
    }
    return out;
  };

  auto column = [&](const std::string& name) {
    try {
      return table.column(name);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  };

  svg::PlotOptions options;
  std::vector<svg::Series> series;
  auto make_series = [&](std::size_t xcol, std::size_t ycol) {
    const auto xs = numeric_column(xcol);
    const auto ys = numeric_column(ycol);
    svg::Series s{table.header[ycol], {}};
    for (std::size_t i = 0; i < xs.size(); ++i) {
      s.points.emplace_back(xs[i], ys[i]);
    }
    return s;
  };

  switch (kind) {
    case PlotKind::line:
      for (std::size_t col = 1; col < table.header.size(); ++col) {
        series.push_back(make_series(0, col));
      }
      options.x_label = table.header[0];
      break;
    case PlotKind::cdf:
      series.push_back(make_series(column("t"), column("cdf")));
      options.clamp_y01 = true;
      options.x_label = "t";
      options.y_label = "cdf";
      break;
    case PlotKind::pdf:
      series.push_back(make_series(column("t"), column("pdf")));
      options.x_label = "t";
      options.y_label = "pdf";
      break;
    case PlotKind::qq:
      if (table.header.size() != 2) {
        throw ConfigError("plot: qq expects exactly two columns");
      }
      series.push_back(make_series(0, 1));
      options.identity_line = true;
      options.x_label = table.header[0];
      options.y_label = table.header[1];
      break;
  }
  try {
    svg::write_plot(svg_path, series, options);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

semlab::UniquenessResult verify_fixture(const std::string& fixture_path) {
  const RawConfig cfg = parse_config(fixture_path);
  auto result = run_verifier(cfg);
  cfg.check_all_consumed();
  return result;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"quantile risk minimization lab"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "bound the worker pool");

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->fallthrough();
  std::string config_path;
  run->add_option("config", config_path, "config or manifest file")->required();
  std::optional<std::uint64_t> seed;
  run->add_option("--seed", seed, "override the config seed");

  auto* plot = app.add_subcommand("plot", "render a csv as svg");
  plot->fallthrough();
  std::string plot_csv, plot_kind = "line", plot_out;
  plot->add_option("csv", plot_csv, "input csv")->required();
  plot->add_option("--kind", plot_kind, "line|cdf|pdf|qq");
  plot->add_option("--out", plot_out, "output svg")->required();

  auto* verify = app.add_subcommand("verify", "run the causal-recovery verifier");
  verify->fallthrough();
  std::string fixture_path;
  verify->add_option("fixture", fixture_path, "fixture file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  parallel::set_max_threads(jobs);
  try {
    if (run->parsed()) {
      run_experiment(config_path, seed);
    } else if (plot->parsed()) {
      render_plot(plot_csv, parse_plot_kind(plot_kind), plot_out);
    } else if (verify->parsed()) {
      const auto result = verify_fixture(fixture_path);
      std::printf("unique=%s\n", result.unique ? "true" : "false");
      std::printf("residual=%s\n", csv::format_double(result.residual).c_str());
      std::printf("inconclusive=%s\n", result.inconclusive ? "true" : "false");
      if (result.witness) {
        std::printf("witness=");
        for (std::size_t i = 0; i < result.witness->size(); ++i) {
          std::printf("%s%s", i ? "," : "",
                      csv::format_double((*result.witness)[i]).c_str());
        }
        std::printf("\n");
      }
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  } catch (const trainer::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}

}  // namespace qrmlab::cli
