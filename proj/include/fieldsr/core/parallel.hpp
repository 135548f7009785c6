// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace fieldsr {

// Worker cap shared by every parallel loop; the CLI --threads flag sets it.
// Results never depend on the cap: work items write disjoint outputs and any
// reductions happen in item order afterwards.
inline int& thread_cap() {
  static int cap = 0;  // 0 = hardware concurrency
  return cap;
}

inline void set_thread_cap(int n) { thread_cap() = n; }

inline int effective_threads(int64_t n_items) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  int cap = thread_cap() > 0 ? std::min(thread_cap(), hw) : hw;
  return static_cast<int>(std::min<int64_t>(cap, n_items));
}

// Static block partition of [0, n) across workers; fn(i) per item.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  const int workers = effective_threads(n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int64_t begin = w * chunk;
    const int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (int64_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fieldsr
