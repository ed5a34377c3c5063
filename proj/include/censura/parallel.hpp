#pragma once

#include <cstddef>
#include <functional>

namespace censura {

/// Worker count: CENSURA_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for every i in [0, n) on at most worker_count() threads. Each
/// index is handled exactly once; the first exception is rethrown after all
/// workers finish. Results must be written to per-index slots for the
/// outcome to be independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace censura
