#pragma once

#include <functional>

#include "cqr/types.hpp"

namespace cqr {

/// Thread budget from the CQR_THREADS environment variable (default 1).
int default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items
/// are claimed dynamically; callers store results by index so the outcome
/// never depends on scheduling. The first exception (lowest index) is
/// rethrown after all workers join.
void parallel_for(Index count, int threads, const std::function<void(Index)>& body);

}  // namespace cqr
