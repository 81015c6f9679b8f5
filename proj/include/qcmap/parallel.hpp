#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace qcmap {

/// Worker count used by per-face loops (1 = run inline). Results never depend on it.
int num_threads();
void set_num_threads(int n);

/// Calls fn(i) for i in [0, n), split into contiguous chunks across num_threads() workers.
/// fn must only write to per-index storage.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, Fn&& fn) {
  const int workers = std::min<std::ptrdiff_t>(num_threads(), std::max<std::ptrdiff_t>(n / 256, 1));
  if (workers <= 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = w * chunk, hi = std::min(n, lo + chunk);
    pool.emplace_back([lo, hi, &fn] {
      for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace qcmap
