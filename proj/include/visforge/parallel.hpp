#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace visforge {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Indices are claimed
// in order; once `stop` is raised no new index is started. The first
// exception thrown by fn halts dispatch and is rethrown after all threads join.
template <typename Fn>
void parallel_for(size_t n, int workers, const std::atomic<bool>* stop, Fn&& fn) {
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&] {
    while (!(stop && stop->load()) && !failed.load()) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const size_t threads = std::clamp<size_t>(static_cast<size_t>(std::max(workers, 1)), 1, std::max<size_t>(n, 1));
  std::vector<std::jthread> pool;
  for (size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace visforge
