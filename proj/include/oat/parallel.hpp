// Deterministic work splitting: the index range is cut into a fixed number of
// chunks regardless of how many threads execute them, so any floating-point
// reduction grouped per chunk is bitwise stable across machines and thread
// counts.
#pragma once

#include <cstddef>
#include <functional>

namespace oat {

inline constexpr std::size_t kFixedChunks = 4;

// Runs fn(chunk_index, begin, end) for each of the (up to kFixedChunks)
// contiguous chunks covering [0, n). Chunks may run on different threads;
// each chunk body runs sequentially.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace oat
