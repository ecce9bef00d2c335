#pragma once

#include <cstddef>
#include <functional>

namespace geobias {

// GEOBIAS_THREADS when set to a positive integer, else hardware concurrency.
unsigned worker_threads();

// Calls fn(i) for i in [0, n) across worker threads. Indices are handed out
// in contiguous chunks; fn must only write to slots owned by its index. The
// first exception thrown by any worker is rethrown after all threads join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned threads = 0);

}  // namespace geobias
