#pragma once

#include <exception>
#include <thread>
#include <vector>

namespace raymin {

// Static block partition of [0,n) across at most `jobs` threads. Workers write
// only to their own output slots, so results are independent of scheduling and
// merging stays in input order. jobs <= 1 runs inline.
template <class F>
void parallel_for(int n, int jobs, F&& f) {
  if (n <= 0) return;
  if (jobs <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  int workers = std::min(jobs, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      int lo = static_cast<int>(static_cast<long long>(n) * w / workers);
      int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
      try {
        for (int i = lo; i < hi; ++i) f(i);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace raymin
