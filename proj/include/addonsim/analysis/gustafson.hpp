#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "addonsim/core/error.hpp"
#include "addonsim/core/profile.hpp"

namespace addonsim::analysis {

// Scaled speedup S = s + p * N.
inline double gustafson(double serial, double parallel, double processors) {
  detail::require(std::abs(serial + parallel - 1.0) <= 1e-9, "gustafson: s + p must equal 1");
  detail::require(processors >= 1.0, "gustafson: N must be >= 1");
  return serial + parallel * processors;
}

struct Fractions {
  double serial = 0.0;
  double parallel = 0.0;
};

// Serial and parallel shares of the *parallel* (ControlNet service)
// execution of one request: text encoder, VAE decoder and the UNet decoder
// steps are serial; the encoder+middle blocks overlapped with the ControlNet
// branches are parallel.
inline Fractions fractions_from_profile(const LatencyProfile& profile, int n_controlnets, int steps,
                                        bool unet_optimized = false) {
  detail::require(n_controlnets >= 1, "fractions_from_profile: n_controlnets must be >= 1");
  detail::require(steps >= 1, "fractions_from_profile: steps must be >= 1");
  const auto st = step_stages(profile, unet_optimized);
  const double serial = profile.text_encoder_ms + profile.vae_decode_ms + steps * st.decoder;
  const double parallel = steps * std::max(st.encoder_mid, st.controlnet + st.comm);
  const double total = serial + parallel;
  if (!(total > 0.0)) throw ValidationError("fractions_from_profile: zero total latency");
  const double s = serial / total;
  return Fractions{s, 1.0 - s};
}

// Processor count for the bound: one UNet encoder branch plus one per ControlNet.
inline int gustafson_processors(int n_controlnets) { return n_controlnets + 1; }

inline double gustafson_bound(const LatencyProfile& profile, int n_controlnets, int steps) {
  const auto f = fractions_from_profile(profile, n_controlnets, steps);
  return gustafson(f.serial, f.parallel, gustafson_processors(n_controlnets));
}

// Solves for the encoder+middle share of a step that makes the serial
// fraction equal `target_serial`. The serial fraction falls as that share grows.
inline LatencyProfile calibrate_encoder_mid_fraction(LatencyProfile profile, int n_controlnets, int steps,
                                                     double target_serial) {
  detail::require(target_serial > 0.0 && target_serial < 1.0, "calibration target must be in (0, 1)");
  double lo = 1e-9;
  double hi = 1.0 - 1e-9;
  auto serial_at = [&](double f) {
    profile.encoder_mid_fraction = f;
    return fractions_from_profile(profile, n_controlnets, steps).serial;
  };
  const double s_lo = serial_at(lo);
  const double s_hi = serial_at(hi);
  if (target_serial > s_lo || target_serial < s_hi) {
    throw ValidationError("calibrate_encoder_mid_fraction: target serial fraction unreachable");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (serial_at(mid) > target_serial ? lo : hi) = mid;
  }
  profile.encoder_mid_fraction = 0.5 * (lo + hi);
  return profile;
}

}  // namespace addonsim::analysis
