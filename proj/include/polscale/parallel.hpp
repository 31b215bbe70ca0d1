#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace polscale {

// Runs fn(i) for i in [0, n) on up to `bound` worker threads. The first
// exception wins and is rethrown on the caller thread after all workers stop.
inline void parallel_for_bounded(size_t n, size_t bound,
                                 const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  size_t workers = std::min(bound == 0 ? size_t{1} : bound, n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  size_t next = 0;
  std::exception_ptr error;
  auto body = [&] {
    for (;;) {
      size_t i;
      {
        std::lock_guard lock(mu);
        if (error || next >= n) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace polscale
