#pragma once

#include <cstddef>
#include <functional>

namespace qdetect {

/// Worker count from QDETECT_WORKERS, else 1.
unsigned default_workers();

/// Calls body(i) for i in [0, n) on up to `workers` threads. Work is handed
/// out in fixed chunks; callers must write results by index so that the
/// outcome does not depend on scheduling.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace qdetect
