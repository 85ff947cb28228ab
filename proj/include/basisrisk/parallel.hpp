#pragma once

#include <cstddef>
#include <functional>

namespace basisrisk {

/// Worker cap used by every parallel loop in the library. Defaults to the
/// BASISRISK_THREADS environment variable, else hardware concurrency.
int max_threads();
void set_max_threads(int threads);

/// Runs body(begin, end) over fixed-size chunks of [0, n). Chunk boundaries
/// depend only on n and chunk, never on the worker count, so any per-index
/// work is reproducible regardless of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t chunk = 1024);

}  // namespace basisrisk
