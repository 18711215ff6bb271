#pragma once

#include <functional>

namespace mbd {

// Worker count: MBD_THREADS if set (clamped to >= 1), else the hardware
// concurrency reported by the OS.
int thread_budget();

// Runs fn(i) for i in [0, n). Each index must touch disjoint output slots;
// any reduction over the results is done by the caller in index order, so
// using threads never changes numbers.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace mbd
