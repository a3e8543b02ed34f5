#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace octopus {

/// Process-wide cap on worker threads; 0 means hardware concurrency.
inline std::atomic<unsigned>& thread_limit() {
  static std::atomic<unsigned> limit{0};
  return limit;
}

/// Runs fn(i) for i in [0, n) on a small worker pool. Work items must be
/// independent; the first exception thrown by any item is rethrown.
template <typename Fn>
void parallel_for(int n, Fn&& fn, unsigned max_threads = 0) {
  if (n <= 0) return;
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (!max_threads) max_threads = thread_limit().load();
  if (max_threads) hw = std::min(hw, max_threads);
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(n));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace octopus
