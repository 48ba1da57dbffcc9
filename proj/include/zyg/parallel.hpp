#pragma once

// Fixed-chunk worker pool. Work is split into a chunk count that does not
// depend on the thread count, and partial results are combined in chunk
// order, so outputs are identical for any --threads value.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace zyg {

inline int default_thread_count() {
  if (const char* env = std::getenv("ZYG_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// fn(chunk_id) for chunk_id in [0, nchunks); chunks are claimed atomically.
template <class Fn>
void parallel_chunks(int nchunks, int threads, Fn&& fn) {
  if (threads <= 1 || nchunks <= 1) {
    for (int c = 0; c < nchunks; ++c) fn(c);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    while (true) {
      int c = next.fetch_add(1);
      if (c >= nchunks) return;
      fn(c);
    }
  };
  int nt = std::min(threads, nchunks);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(nt));
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace zyg
