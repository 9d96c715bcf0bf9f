#pragma once

#include <cstddef>
#include <functional>

namespace rbsde {

/// Worker count: RBSDE_THREADS if set and positive, otherwise the hardware count.
std::size_t thread_count();

/// Calls body(i) for i in [0, n). Each index is handled by exactly one thread, so
/// results are identical for any thread count as long as body(i) only writes slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rbsde
