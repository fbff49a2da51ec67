#pragma once

#include <cstddef>
#include <functional>

namespace mhalab {

/// Worker count: an explicit override if set, else MHA_NW_LAB_THREADS
/// (0 or unset means hardware concurrency).
std::size_t thread_count();

/// Override the worker count for this process; 0 restores the environment default.
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, count). Each index is visited exactly once; the
/// caller is responsible for writing results into per-index slots so that the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace mhalab
