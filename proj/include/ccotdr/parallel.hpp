#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ccotdr {

// Static block partition over [0, n).  Each worker owns a contiguous range,
// so results are independent of thread count and scheduling as long as fn(i)
// touches only slot i.
inline void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
  if (n <= 0) return;
  int nt = threads < 1 ? 1 : threads;
  if (nt == 1 || n == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  long want = (n + nt - 1) / nt;
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (long lo = 0; lo < n; lo += want) {
    long hi = std::min(n, lo + want);
    pool.emplace_back([&, lo, hi] {
      try {
        for (long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ccotdr
