#pragma once

#include <cstddef>
#include <functional>

namespace gmrft {

/// Worker count: hardware concurrency, capped by GMRFT_THREADS when that is a
/// positive integer.
int worker_count();

/// Calls fn(i) for i in [0, count) on up to worker_count() threads. Each index
/// runs exactly once; the first exception thrown is rethrown after all workers
/// have stopped.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace gmrft
