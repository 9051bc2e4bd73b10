#pragma once

#include <cstddef>
#include <cstdlib>
#include <vector>

#include <omp.h>

namespace randix {

/// Degree of parallelism for draw- and replicate-parallel kernels.
/// threads == 0 resolves to RANDIX_THREADS when set, else the OpenMP default.
struct Exec {
  int threads = 0;

  int resolve() const {
    if (threads > 0) return threads;
    if (const char* env = std::getenv("RANDIX_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) return n;
    }
    return omp_get_max_threads();
  }

  static Exec serial() { return Exec{1}; }
};

namespace kernels {

// Every kernel writes result k into slot k. Inputs to body(k, workspace) must
// depend only on k, so the serial and OpenMP paths are bit-identical.

template <class MakeWorkspace, class Body>
void for_each_draw_serial(std::size_t n, MakeWorkspace&& make, Body&& body) {
  auto ws = make();
  for (std::size_t k = 0; k < n; ++k) body(k, ws);
}

template <class MakeWorkspace, class Body>
void for_each_draw_parallel(std::size_t n, int threads, MakeWorkspace&& make, Body&& body) {
  const auto count = static_cast<long long>(n);
#pragma omp parallel num_threads(threads)
  {
    auto ws = make();
#pragma omp for schedule(static)
    for (long long k = 0; k < count; ++k) body(static_cast<std::size_t>(k), ws);
  }
}

template <class MakeWorkspace, class Body>
void for_each_draw(std::size_t n, const Exec& exec, MakeWorkspace&& make, Body&& body) {
  const int threads = exec.resolve();
  if (threads <= 1 || n < 2) {
    for_each_draw_serial(n, make, body);
  } else {
    for_each_draw_parallel(n, threads, make, body);
  }
}

/// Evaluates body(k, ws) -> double for k in [0, n) into a slot vector.
template <class MakeWorkspace, class Body>
std::vector<double> map_draws(std::size_t n, const Exec& exec, MakeWorkspace&& make, Body&& body) {
  std::vector<double> out(n);
  for_each_draw(n, exec, make, [&](std::size_t k, auto& ws) { out[k] = body(k, ws); });
  return out;
}

}  // namespace kernels
}  // namespace randix
