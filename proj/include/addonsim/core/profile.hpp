#pragma once

#include <string>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim {

// Measured end-to-end gains of the three UNet backbone optimizations.
struct UnetOptGains {
  double cuda_graphs = 1.064;
  double geglu = 1.06;
  double groupnorm_silu = 1.072;

  double composed() const { return cuda_graphs * geglu * groupnorm_silu; }
};

// Calibrated stage durations and bandwidths. Defaults form the built-in
// "paper-h800-sdxl" profile (SDXL on an H800 GPU).
struct LatencyProfile {
  // 2.67 s of UNet time over a 50-step run.
  Millis unet_total_ms = 2670.0;
  int steps_reference = 50;
  // Share of one step spent in UNet encoder + middle blocks.
  double encoder_mid_fraction = 0.4;
  // ControlNet compute relative to encoder + middle (extra zero convolutions).
  double controlnet_factor = 1.1;
  // Not measured; placeholders that absorb the gap between UNet time and the
  // 2.9 s end-to-end base-model latency.
  Millis text_encoder_ms = 10.0;
  Millis vae_decode_ms = 120.0;
  // Per-step ControlNet -> UNet transfer, NVLink-class interconnect.
  Mebibytes comm_payload_mib = 108.0;
  double link_gibps = 200.0;
  Millis link_latency_ms = 0.3;
  // 384 MiB LoRA loads in ~490 ms.
  double remote_fetch_gibps = 0.78;
  Millis remote_fetch_latency_ms = 10.0;
  Millis patch_inplace_ms = 100.0;
  // 2 s to create-and-replace a 384 MiB LoRA.
  Millis patch_create_replace_ms_per_100mib = 2000.0 * 100.0 / 384.0;
  // Fixed launch cost paid by every extra merge when a LoRA is patched in groups.
  Millis patch_group_overhead_ms = 20.0;
  double unet_opt_multiplier = 1.0 / 1.2;
  UnetOptGains unet_opt_gains{};
};

inline constexpr const char* kDefaultProfileName = "paper-h800-sdxl";

inline LatencyProfile default_profile() { return LatencyProfile{}; }

inline void validate(const LatencyProfile& p) {
  using detail::require;
  require(p.unet_total_ms >= 0.0, "profile.unet_total_ms must be >= 0");
  require(p.steps_reference >= 1, "profile.steps_reference must be >= 1");
  require(p.encoder_mid_fraction > 0.0 && p.encoder_mid_fraction < 1.0,
          "profile.encoder_mid_fraction must be in (0, 1)");
  require(p.controlnet_factor >= 1.0, "profile.controlnet_factor must be >= 1");
  require(p.text_encoder_ms >= 0.0, "profile.text_encoder_ms must be >= 0");
  require(p.vae_decode_ms >= 0.0, "profile.vae_decode_ms must be >= 0");
  require(p.comm_payload_mib >= 0.0, "profile.comm_payload_mib must be >= 0");
  require(p.link_gibps > 0.0, "profile.link_gibps must be > 0");
  require(p.link_latency_ms >= 0.0, "profile.link_latency_ms must be >= 0");
  require(p.remote_fetch_gibps > 0.0, "profile.remote_fetch_gibps must be > 0");
  require(p.remote_fetch_latency_ms >= 0.0, "profile.remote_fetch_latency_ms must be >= 0");
  require(p.patch_inplace_ms >= 0.0, "profile.patch_inplace_ms must be >= 0");
  require(p.patch_create_replace_ms_per_100mib >= 0.0,
          "profile.patch_create_replace_ms_per_100mib must be >= 0");
  require(p.patch_group_overhead_ms >= 0.0, "profile.patch_group_overhead_ms must be >= 0");
  require(p.unet_opt_multiplier > 0.0 && p.unet_opt_multiplier <= 1.0,
          "profile.unet_opt_multiplier must be in (0, 1]");
}

// Duration of one denoising step. Per-step time is fixed by the profile;
// `steps` is only validated.
inline Millis step_duration(const LatencyProfile& p, int steps) {
  detail::require(steps >= 1, "steps must be >= 1");
  detail::require(p.steps_reference >= 1, "profile.steps_reference must be >= 1");
  return p.unet_total_ms / static_cast<double>(p.steps_reference);
}

inline Millis encoder_mid_duration(const LatencyProfile& p) {
  return step_duration(p, 1) * p.encoder_mid_fraction;
}

// Computed as the remainder so encoder+middle + decoder == step_duration.
inline Millis decoder_duration(const LatencyProfile& p) {
  return step_duration(p, 1) - encoder_mid_duration(p);
}

inline Millis controlnet_step_duration(const LatencyProfile& p) {
  validate(p);
  return p.controlnet_factor * encoder_mid_duration(p);
}

inline Millis comm_duration(const LatencyProfile& p) {
  detail::require(p.link_gibps > 0.0, "profile.link_gibps must be > 0");
  return p.link_latency_ms + p.comm_payload_mib / (p.link_gibps * 1024.0) * 1000.0;
}

inline Millis create_replace_patch_ms(const LatencyProfile& p, Mebibytes lora_size) {
  return p.patch_create_replace_ms_per_100mib * lora_size / 100.0;
}

// Per-step stage durations actually used by a schedule. UNet backbone
// optimizations scale the encoder and decoder only.
struct StepStages {
  Millis encoder_mid = 0.0;
  Millis decoder = 0.0;
  Millis controlnet = 0.0;
  Millis comm = 0.0;

  Millis unet() const { return encoder_mid + decoder; }
};

inline StepStages step_stages(const LatencyProfile& p, bool unet_optimized) {
  validate(p);
  const double m = unet_optimized ? p.unet_opt_multiplier : 1.0;
  return StepStages{
      .encoder_mid = encoder_mid_duration(p) * m,
      .decoder = decoder_duration(p) * m,
      .controlnet = controlnet_step_duration(p),
      .comm = comm_duration(p),
  };
}

}  // namespace addonsim
