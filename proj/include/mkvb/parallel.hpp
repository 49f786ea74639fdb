#pragma once

#include <cstddef>
#include <functional>

namespace mkvb {

/// Resolves a worker-count setting; 0 means one worker per hardware thread.
std::size_t resolve_workers(std::size_t requested) noexcept;

/// Runs fn(0), ..., fn(n - 1) on up to `workers` threads. Each index is
/// processed exactly once; results must be written to index-addressed slots
/// so the outcome does not depend on scheduling. The first exception thrown
/// by any call is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace mkvb
