#pragma once

#include <cstdint>
#include <functional>

namespace svae::threading {

// Number of workers parallel_for may use. Defaults to the hardware thread
// count, capped by the SVAE_THREADS environment variable (read once).
int worker_count();

// Overrides the cap at runtime (0 restores the environment default). Results
// are identical for any cap; tests use this to prove it.
void set_worker_cap(int cap);

// Runs body(begin, end) over a static partition of [begin, end). Every index
// is handled by exactly one invocation, so bodies that write disjoint outputs
// are bitwise deterministic for any worker count. `grain` is the minimum
// chunk size worth shipping to a thread.
void parallel_for(int64_t begin, int64_t end, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& body);

}  // namespace svae::threading
