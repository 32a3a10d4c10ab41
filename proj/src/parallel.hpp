#pragma once

#include <cstdint>
#include <span>
#include <vector>

#ifdef DERAND_HAVE_OPENMP
#include <omp.h>
#endif

namespace derand::detail {

inline int max_threads() {
#ifdef DERAND_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs f(chunk, worker) for every chunk. Results must be written per chunk so
// the caller can combine them in a fixed order.
template <class F>
void for_each_chunk(int64_t chunks, int threads, F&& f) {
#ifdef DERAND_HAVE_OPENMP
  if (threads > 1 && chunks > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (int64_t c = 0; c < chunks; ++c) f(c, omp_get_thread_num());
    return;
  }
#endif
  for (int64_t c = 0; c < chunks; ++c) f(c, 0);
}

// Fixed-shape pairwise summation, independent of how the parts were computed.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

}  // namespace derand::detail
