#pragma once

#include <cstdint>
#include <functional>

namespace tresnet::runtime {

/// Worker count used by kernels that parallelize over independent output
/// elements. Initialized from TRESNET_THREADS on first use, else the
/// hardware concurrency. Results are bitwise independent of this setting:
/// every output element is computed by exactly one worker with a fixed
/// internal summation order.
int thread_count();

void set_thread_count(int n);

/// Splits [begin, end) into contiguous chunks across workers and calls
/// fn(chunk_begin, chunk_end) on each. Runs serially when the range is
/// smaller than min_parallel_range or only one worker is configured.
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& fn,
                  int64_t min_parallel_range = 2);

}  // namespace tresnet::runtime
