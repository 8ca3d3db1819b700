#pragma once

#include <cstddef>
#include <functional>

namespace synthguard {

// Number of worker threads used by parallel_for. Defaults to the
// SYNTHGUARD_THREADS environment variable, falling back to the hardware
// concurrency.
int thread_budget();
void set_thread_budget(int n);

// Runs fn(i) for every i in [0, n). Tasks are claimed from a shared atomic
// counter, so scheduling varies between runs; fn must write only to
// i-indexed slots (and draw randomness only from keys derived from i) so
// that results do not depend on the thread count. Reductions happen after
// the join, in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace synthguard
