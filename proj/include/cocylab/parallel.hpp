#pragma once

#include <cstddef>
#include <functional>

namespace cocylab {

// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
// Each index is processed exactly once; callers write results into
// per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace cocylab
