#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "clincon/text.hpp"

namespace clincon {

/// Worker cap: CLINCON_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
inline std::size_t thread_cap() {
  if (const char* env = std::getenv("CLINCON_THREADS")) {
    if (auto v = parse_number<std::size_t>(env); v && *v > 0) return *v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..n-1) on up to thread_cap() workers. Each index must write only
/// its own output slot; the first exception is rethrown after all workers join.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(n, thread_cap());
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace clincon
