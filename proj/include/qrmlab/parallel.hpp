#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qrmlab::parallel {

enum class Exec { serial, openmp };

// Process-wide default used by the parallel kernels; the CLI leaves it at
// openmp, tests flip it to compare against the serial reference.
Exec default_exec();
void set_default_exec(Exec e);

// Caps the OpenMP thread pool (CLI --jobs). No-op in serial builds.
void set_max_threads(int n);

inline constexpr std::size_t kDefaultChunk = 8192;

// Runs body(chunk_index, begin, end) over fixed-size chunks of [0, n).
// Chunk boundaries do not depend on the thread count, so kernels that write
// per-chunk slots (or per-index slots) and combine them in chunk order
// produce bit-identical results under serial and openmp execution.
template <class Body>
void for_chunks(std::size_t n, std::size_t chunk, Exec exec, Body&& body) {
  if (n == 0) return;
  if (chunk == 0) chunk = kDefaultChunk;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
#ifdef _OPENMP
  if (exec == Exec::openmp) {
    const auto count = static_cast<long long>(nchunks);
#pragma omp parallel for schedule(static)
    for (long long c = 0; c < count; ++c) {
      const std::size_t begin = static_cast<std::size_t>(c) * chunk;
      const std::size_t end = begin + chunk < n ? begin + chunk : n;
      body(static_cast<std::size_t>(c), begin, end);
    }
    return;
  }
#else
  (void)exec;
#endif
  for (std::size_t c = 0; c < nchunks; ++c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = begin + chunk < n ? begin + chunk : n;
    body(c, begin, end);
  }
}

template <class Body>
void for_chunks(std::size_t n, std::size_t chunk, Body&& body) {
  for_chunks(n, chunk, default_exec(), static_cast<Body&&>(body));
}

// One index per task; used for per-domain and per-cell loops where each
// iteration owns its output slot.
template <class Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  for_chunks(n, 1, exec, [&](std::size_t, std::size_t begin, std::size_t) {
    body(begin);
  });
}

template <class Body>
void for_each_index(std::size_t n, Body&& body) {
  for_each_index(n, default_exec(), static_cast<Body&&>(body));
}

}  // namespace qrmlab::parallel
