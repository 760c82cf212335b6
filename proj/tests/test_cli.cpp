#include "qrmlab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "qrmlab/csv.hpp"

using namespace qrmlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("cli_test_tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all("cli_test_tmp"); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string small_fig2c_config(const std::string& out_dir) {
  return "[experiment]\n"
         "kind = fig2c-coefficients\n"
         "seed = 5\n"
         "output_dir = " + out_dir + "\n"
         "[environments]\n"
         "m = 10\n"
         "[objective]\n"
         "alphas = 0.5\n"
         "log1m_alphas = -1000\n"
         "[train]\n"
         "learning_rate = 0.05\n"
         "post_pretrain_lr = 0.001\n"
         "pretrain_steps = 20\n"
         "steps = 60\n";
}

int run_argv(std::vector<std::string> args) {
  std::vector<char*> argv;
  args.insert(args.begin(), "qrmlab");
  for (auto& a : args) argv.push_back(a.data());
  return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::map<std::string, std::string> kv;
  const auto table = csv::read(path);
  for (const auto& row : table.rows) kv[row[0]] = row[1];
  return kv;
}

}  // namespace

TEST_CASE("run writes manifest, csv and svg artifacts") {
  TempDir tmp("basic");
  const auto config = tmp.file("exp.conf");
  write_file(config, small_fig2c_config(tmp.file("out")));
  cli::run_experiment(config);

  CHECK(fs::exists(tmp.file("out/manifest.csv")));
  CHECK(fs::exists(tmp.file("out/coefficients.csv")));
  CHECK(fs::exists(tmp.file("out/trajectory_0.csv")));
  CHECK(fs::exists(tmp.file("out/trajectory_1.csv")));
  CHECK(fs::exists(tmp.file("out/coefficients.svg")));

  const auto table = csv::read(tmp.file("out/coefficients.csv"));
  CHECK(table.header ==
        std::vector<std::string>{"alpha", "log1m_alpha", "beta1", "beta2"});
  REQUIRE(table.rows.size() == 2);
  CHECK(csv::parse_double(table.rows[1][1]) == -1000.0);

  const auto svg = read_file(tmp.file("out/coefficients.svg"));
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);

  const auto manifest = read_kv(tmp.file("out/manifest.csv"));
  CHECK(manifest.at("seed") == "5");
  CHECK(manifest.at("config.experiment.kind") == "fig2c-coefficients");
  CHECK(!manifest.at("build_id").empty());
}

TEST_CASE("same config and seed reproduce byte-identical artifacts") {
  TempDir tmp("determinism");
  const auto config = tmp.file("exp.conf");
  write_file(config, small_fig2c_config(tmp.file("out")));

  cli::run_experiment(config);
  std::map<std::string, std::string> snapshot;
  for (const auto& entry : fs::directory_iterator(tmp.file("out"))) {
    snapshot[entry.path().filename().string()] = read_file(entry.path().string());
  }
  REQUIRE(snapshot.size() >= 5);

  cli::run_experiment(config);
  for (const auto& [name, bytes] : snapshot) {
    CHECK(read_file(tmp.file("out/" + name)) == bytes);
  }

  // Manifest round trip: re-running the manifest reproduces the same bytes.
  cli::run_experiment(tmp.file("out/manifest.csv"));
  for (const auto& [name, bytes] : snapshot) {
    CHECK(read_file(tmp.file("out/" + name)) == bytes);
  }
}

TEST_CASE("seed override lands in the manifest and changes results") {
  TempDir tmp("seed");
  const auto config = tmp.file("exp.conf");
  write_file(config, small_fig2c_config(tmp.file("out")));
  cli::run_experiment(config, 77);
  const auto manifest = read_kv(tmp.file("out/manifest.csv"));
  CHECK(manifest.at("seed") == "77");
  CHECK(manifest.at("config.experiment.seed") == "77");
  const auto with_77 = read_file(tmp.file("out/coefficients.csv"));
  cli::run_experiment(config);
  CHECK(read_file(tmp.file("out/coefficients.csv")) != with_77);
}

TEST_CASE("config errors: unknown keys, bad kind, missing file") {
  TempDir tmp("errors");
  const auto config = tmp.file("exp.conf");
  write_file(config, small_fig2c_config(tmp.file("out")) + "typo_key = 1\n");
  CHECK_THROWS_AS(cli::run_experiment(config), cli::ConfigError);

  write_file(config, "[experiment]\nkind = fig9z\noutput_dir = " +
                         tmp.file("out2") + "\n");
  CHECK_THROWS_AS(cli::run_experiment(config), cli::ConfigError);
  // Partial outputs (the manifest) are removed on failure.
  CHECK(!fs::exists(tmp.file("out2/manifest.csv")));

  CHECK_THROWS_AS(cli::run_experiment(tmp.file("missing.conf")), cli::ConfigError);
}

TEST_CASE("causal-verify experiment and fixture verification") {
  TempDir tmp("verify");
  const auto config = tmp.file("verify.conf");
  write_file(config,
             "[experiment]\n"
             "kind = causal-verify\n"
             "output_dir = " + tmp.file("vout") + "\n"
             "[domain.1]\n"
             "sigma2 = 0.7\n"
             "[domain.2]\n"
             "sigma2 = 2.1\n");
  cli::run_experiment(config);
  const auto kv = read_kv(tmp.file("vout/verify.csv"));
  CHECK(kv.at("unique") == "true");

  // Fixture without an [experiment] section, raw-moment domains with a
  // witness (identical domains, correlated causes, a descendant).
  const auto fixture = tmp.file("fixture.conf");
  write_file(fixture,
             "[domain.1]\n"
             "kind = moments\n"
             "xx = 1, 1, 1, 3.25\n"
             "xn = 0, 2\n"
             "[domain.2]\n"
             "kind = moments\n"
             "xx = 1, 1, 1, 3.25\n"
             "xn = 0, 2\n");
  const auto result = cli::verify_fixture(fixture);
  CHECK(!result.unique);
  REQUIRE(result.witness.has_value());
}

TEST_CASE("plot kinds and schema checks") {
  TempDir tmp("plot");
  const auto csv_path = tmp.file("two.csv");
  write_file(csv_path, "x,y\n0,1\n2,3\n");
  cli::render_plot(csv_path, cli::PlotKind::line, tmp.file("line.svg"));
  const auto line_svg = read_file(tmp.file("line.svg"));
  std::size_t polylines = 0;
  for (std::size_t pos = line_svg.find("<polyline"); pos != std::string::npos;
       pos = line_svg.find("<polyline", pos + 1)) {
    ++polylines;
  }
  CHECK(polylines == 1);

  cli::render_plot(csv_path, cli::PlotKind::qq, tmp.file("qq.svg"));
  const auto qq_svg = read_file(tmp.file("qq.svg"));
  CHECK(qq_svg.find("stroke-dasharray") != std::string::npos);

  write_file(tmp.file("curve.csv"),
             "t,pdf,cdf\n0,0.1,0\n1,0.5,0.4\n2,0.1,1\n");
  cli::render_plot(tmp.file("curve.csv"), cli::PlotKind::cdf, tmp.file("cdf.svg"));
  CHECK(read_file(tmp.file("cdf.svg")).find("<svg") != std::string::npos);

  // cdf kind on a csv without the curve schema is rejected.
  CHECK_THROWS_AS(
      cli::render_plot(csv_path, cli::PlotKind::cdf, tmp.file("bad.svg")),
      cli::ConfigError);
  // qq kind needs exactly two columns.
  CHECK_THROWS_AS(cli::render_plot(tmp.file("curve.csv"), cli::PlotKind::qq,
                                   tmp.file("bad.svg")),
                  cli::ConfigError);
  write_file(tmp.file("text.csv"), "a,b\nhello,1\n");
  CHECK_THROWS_AS(
      cli::render_plot(tmp.file("text.csv"), cli::PlotKind::line, tmp.file("bad.svg")),
      cli::ConfigError);
}

TEST_CASE("cmnist-toy smoke run") {
  TempDir tmp("cmnist");
  const auto config = tmp.file("toy.conf");
  write_file(config,
             "[experiment]\n"
             "kind = cmnist-toy\n"
             "seed = 2\n"
             "output_dir = " + tmp.file("toy_out") + "\n"
             "[data]\n"
             "p_colors = 0.9, 0.8\n"
             "p_test = 0.1\n"
             "samples_per_domain = 2000\n"
             "seeds = 2\n"
             "[objective]\n"
             "log1m_alphas = -1000\n"
             "[train]\n"
             "learning_rate = 0.5\n"
             "post_pretrain_lr = 0.1\n"
             "pretrain_steps = 50\n"
             "steps = 150\n");
  cli::run_experiment(config);
  const auto table = csv::read(tmp.file("toy_out/accuracy.csv"));
  CHECK(table.header ==
        std::vector<std::string>{"objective", "seed", "test_accuracy"});
  CHECK(table.rows.size() == 4);  // {erm, eqrm} x 2 seeds
  CHECK(fs::exists(tmp.file("toy_out/accuracy_mean.csv")));
  CHECK(fs::exists(tmp.file("toy_out/accuracy.svg")));
}

TEST_CASE("run_cli maps outcomes to exit codes") {
  TempDir tmp("codes");
  write_file(tmp.file("bad.conf"), "[experiment]\nkind = nope\noutput_dir = " +
                                       tmp.file("x") + "\n");
  CHECK(run_argv({"run", tmp.file("bad.conf")}) == cli::kExitConfigError);
  CHECK(run_argv({"plot", tmp.file("absent.csv"), "--out", tmp.file("o.svg")}) ==
        cli::kExitConfigError);
  CHECK(run_argv({"frobnicate"}) == cli::kExitConfigError);

  write_file(tmp.file("ok.conf"), small_fig2c_config(tmp.file("ok_out")));
  CHECK(run_argv({"run", tmp.file("ok.conf"), "--seed", "3", "--jobs", "2"}) ==
        cli::kExitOk);

  // A blow-up learning rate surfaces as the divergence exit code.
  write_file(tmp.file("diverge.conf"),
             "[experiment]\n"
             "kind = fig2c-coefficients\n"
             "output_dir = " + tmp.file("div_out") + "\n"
             "[environments]\n"
             "m = 6\n"
             "[objective]\n"
             "alphas = 0.9\n"
             "[train]\n"
             "learning_rate = 1000\n"
             "pretrain_steps = 0\n"
             "steps = 4000\n");
  CHECK(run_argv({"run", tmp.file("diverge.conf")}) == cli::kExitDivergence);
  CHECK(!fs::exists(tmp.file("div_out/manifest.csv")));
}
