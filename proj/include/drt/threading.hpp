#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace drt {

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : int(n);
}

// Splits [0, n) into `workers` contiguous slices and runs fn(worker, begin, end)
// on each. The partition depends only on (n, workers), never on scheduling, so
// per-worker buffers reduced in worker order give run-to-run identical results.
inline void parallel_for_workers(int64_t n, int workers,
                                 const std::function<void(int, int64_t, int64_t)>& fn) {
  if (workers < 1) workers = 1;
  if (n <= 0) return;
  if (workers == 1 || n == 1) {
    fn(0, 0, n);
    return;
  }
  if (int64_t(workers) > n) workers = int(n);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  auto run = [&fn, n, workers](int w) {
    int64_t b = n * w / workers;
    int64_t e = n * (w + 1) / workers;
    fn(w, b, e);
  };
  for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
}

}  // namespace drt
