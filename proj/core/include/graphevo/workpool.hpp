#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace gevo {

/// Runs fn(i) for i in [0, n) across up to `workers` threads. Tasks write
/// results into caller-owned slots indexed by i, so the outcome is
/// independent of scheduling.
inline void parallel_for(int n, int workers,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

}  // namespace gevo
