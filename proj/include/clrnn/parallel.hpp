#pragma once

// Worker pool for row-partitioned kernels. Work items are contiguous index
// ranges with disjoint outputs, so the number of threads never changes
// results, only wall time.

#include <cstddef>
#include <functional>

namespace clrnn {

// Threads used by parallel_for. Defaults to hardware concurrency, capped by
// the CLRNN_THREADS environment variable when set.
int max_threads();
void set_max_threads(int n);

// Calls fn(begin, end) over disjoint chunks covering [0, count). Runs inline
// when the range is small or only one thread is allowed.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 1024);

// Fixed block size; block count may well exceed the thread count. Used when
// the block size is chosen for cache residency rather than load balance.
void parallel_for_blocks(std::size_t count, std::size_t block,
                         const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace clrnn
