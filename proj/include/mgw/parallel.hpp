#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mgw {

/// Runs f(state, i) for i in [0, n) on `workers` threads pulling indices from
/// a shared counter; results are stored by index, so the output does not
/// depend on scheduling. Each worker owns one `State` made by make_state().
template <class Result, class MakeState, class F>
std::vector<Result> parallel_map_with_state(std::size_t n, unsigned workers, MakeState make_state, F f) {
  std::vector<Result> out(n);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    try {
      auto state = make_state();
      for (std::size_t i; (i = next.fetch_add(1)) < n;) out[i] = f(state, i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = n;
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

template <class Result, class F>
std::vector<Result> parallel_map(std::size_t n, unsigned workers, F f) {
  return parallel_map_with_state<Result>(n, workers, [] { return 0; }, [&](int&, std::size_t i) { return f(i); });
}

}  // namespace mgw
