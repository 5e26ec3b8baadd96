#pragma once

#include <cstddef>
#include <functional>

namespace lqrl {

/// Worker count: LQRL_THREADS if set and positive, else hardware concurrency (at least 1).
unsigned thread_count();

/// Calls fn(i) for i in [0, count) across up to thread_count() threads.
/// Work is split into contiguous blocks; callers write results by index, so output never
/// depends on scheduling. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace lqrl
