#pragma once

// Deterministic fan-out of independent per-index jobs over a fixed number of
// worker threads.
//
// The concurrency model used throughout the library: every Monte Carlo driver
// owns one pre-sized result slot per path index, each job writes only its own
// slot, and the caller reduces the slots sequentially in ascending index
// order afterwards. Threads race only over which index they pull from a
// shared atomic cursor, so the numbers produced are bitwise independent of
// the worker count and of scheduling.

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace emlab {

// Invokes job(i) for every i in [0, count), using `workers` threads.
// workers == 1 runs inline on the calling thread. Each job must confine its
// writes to caller-owned storage for its own index. If any job throws, the
// remaining work is abandoned and the first exception is rethrown after all
// threads have joined.
template <typename Job>
inline void parallel_for_index(std::uint64_t count, int workers, Job&& job) {
  if (workers < 1) {
    throw std::invalid_argument("parallel_for_index: need at least one worker");
  }
  if (count == 0) return;
  if (workers == 1 || count == 1) {
    for (std::uint64_t i = 0; i < count; ++i) job(i);
    return;
  }

  std::atomic<std::uint64_t> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto body = [&]() {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::uint64_t i = cursor.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  const int spawn =
      static_cast<int>(std::min<std::uint64_t>(count, static_cast<std::uint64_t>(workers)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int w = 0; w < spawn; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace emlab
