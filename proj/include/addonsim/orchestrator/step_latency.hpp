#pragma once

#include <algorithm>

#include "addonsim/core/error.hpp"
#include "addonsim/core/profile.hpp"

namespace addonsim {

// One step with every ControlNet colocated on the base GPU and run before
// the UNet: n*c + e + dec. Handoff is in-memory, so no comm term.
inline Millis serial_step_latency(int n_controlnets, const StepStages& st) {
  detail::require(n_controlnets >= 0, "n_controlnets must be >= 0");
  return n_controlnets * st.controlnet + st.encoder_mid + st.decoder;
}

inline Millis serial_step_latency(int n_controlnets, const LatencyProfile& p, bool unet_optimized = false) {
  return serial_step_latency(n_controlnets, step_stages(p, unet_optimized));
}

// One step with ControlNets on service GPUs running beside the UNet
// encoder; the decoder waits for every output. With fewer service GPUs than
// ControlNets the branches queue on the shared GPUs.
inline Millis parallel_step_latency(int n_controlnets, const StepStages& st, int controlnet_gpus) {
  detail::require(n_controlnets >= 1, "parallel_step_latency needs n_controlnets >= 1");
  detail::require(controlnet_gpus >= 1, "parallel_step_latency needs at least one ControlNet GPU");
  const int per_gpu = (n_controlnets + controlnet_gpus - 1) / controlnet_gpus;
  const Millis branch = per_gpu * st.controlnet + st.comm;
  return std::max(st.encoder_mid, branch) + st.decoder;
}

inline Millis parallel_step_latency(int n_controlnets, const LatencyProfile& p, bool unet_optimized = false) {
  return parallel_step_latency(n_controlnets, step_stages(p, unet_optimized), n_controlnets);
}

}  // namespace addonsim
