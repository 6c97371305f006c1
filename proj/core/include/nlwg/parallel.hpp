#pragma once

#include <cstddef>
#include <functional>

namespace nlwg {

// Worker cap: min(hardware_concurrency, NLWG_THREADS if set). Always >= 1.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks across at
// most worker_count() threads; fn must write only to its own index so results
// are identical to the serial order regardless of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nlwg
