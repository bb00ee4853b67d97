#pragma once

#include <functional>

namespace keldysh {

// Worker count: KELDYSH_LAB_THREADS when set (clamped to [1, 256]), otherwise
// the hardware concurrency. Read once per process.
int thread_count();

// Static block partition of [begin, end) over the worker pool. Each index is
// visited exactly once; callers make results deterministic by writing to
// per-index slots and reducing serially afterwards.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace keldysh
