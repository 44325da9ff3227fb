#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace llf {

// Resolves the worker count: explicit request > LLF_THREADS env variable >
// hardware concurrency.  Always at least 1.
inline int resolve_num_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LLF_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs body(i) for i in [0, n).  Work is split into contiguous blocks, one
// per worker.  The body must only write to state owned by index i (its own
// output slot); under that contract results are identical for any thread
// count.  The first exception thrown by any worker is rethrown here.
inline void parallel_for(int n, int num_threads,
                         const std::function<void(int)>& body) {
  if (n <= 0) return;
  num_threads = std::min(std::max(num_threads, 1), n);
  if (num_threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(num_threads));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  int base = n / num_threads;
  int extra = n % num_threads;
  int begin = 0;
  for (int t = 0; t < num_threads; ++t) {
    int len = base + (t < extra ? 1 : 0);
    int end = begin + len;
    workers.emplace_back([&, begin, end]() {
      try {
        for (int i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace llf
