#pragma once

#include <cstddef>
#include <span>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"
#include "addonsim/orchestrator/executor.hpp"

namespace addonsim {

// Images per minute of GPU time. Every GPU a request touched counts,
// including ControlNet service GPUs.
inline double throughput(std::size_t completed_images, Millis gpu_busy_ms) {
  if (!(gpu_busy_ms > 0.0)) throw ValidationError("throughput: zero GPU time");
  return static_cast<double>(completed_images) / (gpu_busy_ms / 60000.0);
}

inline double throughput(std::span<const RequestResult> results, Millis window) {
  detail::require(window > 0.0, "throughput: window must be > 0");
  std::size_t done = 0;
  Millis busy = 0.0;
  for (const auto& r : results) {
    if (!r.ok) continue;
    detail::require(r.end <= window, "throughput: window does not cover request " + std::to_string(r.request.id));
    ++done;
    for (const auto& [gpu, ms] : r.breakdown.gpu_ms_consumed) busy += ms;
  }
  return throughput(done, busy);
}

}  // namespace addonsim
