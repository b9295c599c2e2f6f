#pragma once

#include <cstddef>
#include <functional>

namespace liprcp {

/// Worker count: hardware concurrency capped by the LIPRCP_THREADS
/// environment variable when it is set to a positive integer.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) over contiguous chunks. Each index is
/// visited exactly once, so results written per index are deterministic
/// regardless of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace liprcp
