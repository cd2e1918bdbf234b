#pragma once

#include <cstddef>
#include <functional>

namespace hetlmm {

/// Resolve a requested worker count: 0 means the HETLMM_THREADS environment
/// variable if set, otherwise the hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

/// Run body(i) for i in [0, count) on up to `threads` workers. Work items are
/// claimed dynamically; callers write results into pre-sized slots so the
/// outcome never depends on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace hetlmm
