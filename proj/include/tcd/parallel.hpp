#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace tcd {

/// 0 means "use available parallelism".
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(begin, end, chunk) over [0, n) split into contiguous chunks, one
/// per worker. Chunk boundaries depend on the thread count, so callers must
/// only combine per-index results or associative integer counts.
template <typename Fn>
void parallel_for(std::int64_t n, unsigned threads, Fn&& fn) {
  if (n <= 0) return;
  const auto workers = static_cast<std::int64_t>(std::min<std::int64_t>(resolve_threads(threads), n));
  if (workers <= 1) {
    fn(std::int64_t{0}, n, 0u);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::int64_t w = 0; w < workers; ++w) {
    const std::int64_t begin = n * w / workers;
    const std::int64_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end, w] {
      try {
        fn(begin, end, static_cast<unsigned>(w));
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace tcd
