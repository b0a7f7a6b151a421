#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nsg {

// NSG_THREADS caps worker count; default is the hardware count.
inline int thread_cap() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("NSG_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return hw;
}

// Parallel map over [0, n). fn(i) must write only to slot i; aggregation
// stays order-independent, so results match the serial run exactly.
template <class F>
inline void parallel_for(std::size_t n, F&& fn, int threads = 0) {
  int k = threads > 0 ? threads : thread_cap();
  if (static_cast<std::size_t>(k) > n) k = static_cast<int>(n);
  if (k <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (int t = 0; t < k; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
          break;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace nsg
