#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace iopcal {

/// Worker count from IOP_CALIB_THREADS when set to a positive integer,
/// otherwise the hardware concurrency (at least 1).
std::size_t default_thread_count();

/// Runs task(i) for i in [0, count) on up to `threads` workers. Index
/// assignment is static, so results stored per index do not depend on the
/// thread count. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& task);

/// splitmix64 mixing of a base seed with a stream id.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace iopcal
