#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "warpsdf/common.hpp"

namespace warpsdf {

// Runs fn(chunk_index, worker_index) for chunk_index in [0, n_chunks).
// Chunks are assigned to workers as contiguous blocks and each worker runs
// its block in ascending order, so any per-worker accumulation is
// reproducible. Callers that need results independent of the worker count
// keep per-chunk outputs and merge them in chunk order afterwards.
inline void parallel_chunks(int n_chunks, int n_threads,
                            const std::function<void(int, int)>& fn) {
  n_threads = std::max(1, std::min(n_threads, n_chunks));
  if (n_threads == 1) {
    for (int c = 0; c < n_chunks; ++c) fn(c, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;
  int per = (n_chunks + n_threads - 1) / n_threads;
  for (int w = 0; w < n_threads; ++w) {
    int begin = w * per, end = std::min(n_chunks, begin + per);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        for (int c = begin; c < end && !failed.load(std::memory_order_relaxed); ++c)
          fn(c, w);
      } catch (...) {
        failed = true;
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline int default_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : int(n);
}

}  // namespace warpsdf
