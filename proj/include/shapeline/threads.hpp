#pragma once

// Blocked parallel loop over an index range.  Worker count comes from
// SHAPELINE_THREADS, falling back to the hardware concurrency.

#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace shapeline::core {

inline int worker_count() {
  if (const char* env = std::getenv("SHAPELINE_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

template <typename Body>
void parallel_for(std::int64_t begin, std::int64_t end, const Body& body) {
  const std::int64_t count = end - begin;
  if (count <= 0) return;
  int workers = worker_count();
  if (workers <= 1 || count == 1) {
    for (std::int64_t i = begin; i < end; ++i) body(i);
    return;
  }
  workers = static_cast<int>(
      std::min<std::int64_t>(workers, count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([=]() {
      for (std::int64_t i = begin + w; i < end; i += workers) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace shapeline::core
