#pragma once

#include <cstddef>
#include <functional>

namespace gwp {

/// Worker count from GWP_NUM_THREADS, else the hardware concurrency.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() threads. Each index
/// is processed exactly once; the first exception (lowest index) is rethrown
/// after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gwp
