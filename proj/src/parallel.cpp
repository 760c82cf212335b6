#include "qrmlab/parallel.hpp"

namespace qrmlab::parallel {

namespace {
Exec g_default =
#ifdef _OPENMP
    Exec::openmp;
#else
    Exec::serial;
#endif
}  // namespace

Exec default_exec() { return g_default; }

void set_default_exec(Exec e) { g_default = e; }

void set_max_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace qrmlab::parallel
