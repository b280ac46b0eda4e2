#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace fedmix {

// Runs fn(i) for i in [0, n) on `workers` threads with static striding.
// Output must go to per-index slots; results are then independent of the
// worker count and of scheduling. Exceptions are rethrown on the caller.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int num_threads = std::min(workers, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(num_threads));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(num_threads));
  for (int t = 0; t < num_threads; ++t) {
    threads.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += num_threads) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace fedmix
