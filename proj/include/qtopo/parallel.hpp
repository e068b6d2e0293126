#pragma once

#include <cstddef>
#include <functional>

namespace qtopo {

// Worker cap; 0 means unset. Falls back to QTOPO_THREADS, then to 1.
void set_thread_count(int n);
int thread_count();

// Runs body(i) for i in [0, n) on up to thread_count() workers. Each index
// is handled exactly once, so results written per index do not depend on
// scheduling. The first exception thrown is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qtopo
