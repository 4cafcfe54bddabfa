#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace lvba {

/// Number of work chunks used by every parallel reduction. Fixed, so that
/// chunk boundaries and therefore floating-point reduction order never
/// depend on the host's core count.
inline constexpr std::size_t kReductionChunks = 8;

/// Runs fn(chunk, begin, end) over kReductionChunks contiguous ranges of
/// [0, n). Chunks run on up to hardware_concurrency threads; callers merge
/// per-chunk results in chunk order.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
  const std::size_t chunks = kReductionChunks;
  auto range = [&](std::size_t c) {
    return std::pair{n * c / chunks, n * (c + 1) / chunks};
  };
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, chunks);
  if (workers == 1 || n < 64) {
    for (std::size_t c = 0; c < chunks; ++c) {
      auto [b, e] = range(c);
      fn(c, b, e);
    }
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += workers) {
        auto [b, e] = range(c);
        fn(c, b, e);
      }
    });
  }
}

/// Element-wise parallel loop for independent work with no reduction.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  parallel_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace lvba
