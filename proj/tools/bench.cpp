// Times the data-parallel kernels against their serial reference.
//
//   qrmlab_bench [n_samples] [n_domains]

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "qrmlab/evalkit.hpp"
#include "qrmlab/parallel.hpp"
#include "qrmlab/semlab.hpp"
#include "qrmlab/trainer.hpp"

using qrmlab::parallel::Exec;

namespace {

template <class F>
double time_ms(F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void report(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-28s serial %9.2f ms   openmp %9.2f ms   speedup %.2fx\n", name,
              serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 2000000;
  const std::size_t m = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 2000;

  qrmlab::semlab::DomainSpec spec;
  report("generate_data",
         time_ms([&] { qrmlab::semlab::generate_data(spec, n, 7, Exec::serial); }),
         time_ms([&] { qrmlab::semlab::generate_data(spec, n, 7, Exec::openmp); }));

  qrmlab::semlab::ColorShapeSpec cs;
  report("generate_color_shape",
         time_ms([&] { qrmlab::semlab::generate_color_shape(cs, n, 7, Exec::serial); }),
         time_ms([&] { qrmlab::semlab::generate_color_shape(cs, n, 7, Exec::openmp); }));

  const auto envs = qrmlab::semlab::sample_environments(
      m, qrmlab::semlab::EnvironmentFamily{}, 11);
  qrmlab::trainer::Predictor predictor;
  predictor.weights = {0.4, 0.6};
  const auto sampled = qrmlab::trainer::RiskMode::sampled(4000);
  report("domain_risks (sampled)",
         time_ms([&] {
           qrmlab::parallel::set_default_exec(Exec::serial);
           qrmlab::trainer::domain_risks(predictor, envs, sampled, 3);
         }),
         time_ms([&] {
           qrmlab::parallel::set_default_exec(Exec::openmp);
           qrmlab::trainer::domain_risks(predictor, envs, sampled, 3);
         }));

  report("qq_experiment",
         time_ms([&] {
           qrmlab::parallel::set_default_exec(Exec::serial);
           const std::size_t ms[] = {10, 50, 200, 1000};
           qrmlab::evalkit::qq_experiment(
               {}, 0.0, 1.0, qrmlab::numkit::AlphaLevel::probability(0.9), ms,
               1000, 20, 5);
         }),
         time_ms([&] {
           qrmlab::parallel::set_default_exec(Exec::openmp);
           const std::size_t ms[] = {10, 50, 200, 1000};
           qrmlab::evalkit::qq_experiment(
               {}, 0.0, 1.0, qrmlab::numkit::AlphaLevel::probability(0.9), ms,
               1000, 20, 5);
         }));

  qrmlab::parallel::set_default_exec(Exec::openmp);
  return 0;
}
