#pragma once

#include <functional>

namespace planter::threading {

/// Number of worker threads the pool runs with (>= 1). Defaults to the
/// hardware concurrency; override with set_thread_count or PLANTER_THREADS.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) exactly once for each i in [0, count), possibly concurrently.
/// Indices carry disjoint outputs; callers that reduce must merge per-index
/// results in index order afterwards, which keeps every result independent
/// of the thread count. Calls made from inside a worker run inline so the
/// pool never nests waits.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace planter::threading
