#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "qrmlab/semlab.hpp"

namespace qrmlab::cli {

// Bad config file, unknown keys, or a CSV that does not match the declared
// plot schema. Mapped to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDivergence = 3;

// Runs the experiment described by a config file (or a previously written
// manifest.csv), writing manifest.csv, the module CSVs and SVG plots into
// the configured output directory. Partial outputs are removed on failure.
// Throws ConfigError or trainer::DivergenceError.
void run_experiment(const std::string& config_path,
                    std::optional<std::uint64_t> seed_override = {});

enum class PlotKind { line, cdf, pdf, qq };

// Renders a CSV as a standalone SVG. line: first column is x, every other
// column a series. cdf/pdf: expects risk_curve columns (t,pdf,cdf), the cdf
// y-range clamped to [0,1]. qq: two columns plus a dashed identity line.
void render_plot(const std::string& csv_path, PlotKind kind,
                 const std::string& svg_path);

PlotKind parse_plot_kind(const std::string& name);  // throws ConfigError

// Runs the causal-recovery verifier on a fixture file of [domain.N]
// sections (SEM parameters or raw moments).
semlab::UniquenessResult verify_fixture(const std::string& fixture_path);

// Exception-to-exit-code wrapper used by the command-line entry point.
int run_cli(int argc, char** argv);

}  // namespace qrmlab::cli
