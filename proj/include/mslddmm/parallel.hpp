#pragma once

#include <cstddef>
#include <functional>

namespace mslddmm {

/// Worker count: MSLDDMM_THREADS when set, hardware concurrency otherwise.
int worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, count). Chunks are
/// disjoint, so bodies writing only to their own index range need no locking.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace mslddmm
