#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "addonsim/core/error.hpp"

namespace addonsim {

// All simulated time is milliseconds since trace start.
using Millis = double;
using Mebibytes = double;

using ControlNetId = std::string;
using LoraId = std::string;

struct LoraRef {
  LoraId id;
  Mebibytes size_mib = 0.0;

  friend bool operator==(const LoraRef&, const LoraRef&) = default;
};

// One image-generation job.
struct Request {
  std::uint64_t id = 0;
  Millis arrival = 0.0;
  std::vector<ControlNetId> controlnets;
  std::vector<LoraRef> loras;
  int steps = 50;
  std::optional<std::string> policy_override;

  friend bool operator==(const Request&, const Request&) = default;
};

struct RequestLimits {
  std::size_t max_controlnets = 3;
  std::size_t max_loras = 2;
};

inline void validate(const Request& r, const RequestLimits& limits = {}) {
  const auto where = "request " + std::to_string(r.id) + ": ";
  detail::require(r.controlnets.size() <= limits.max_controlnets,
                  where + "too many ControlNets (" + std::to_string(r.controlnets.size()) + " > " +
                      std::to_string(limits.max_controlnets) + ")");
  detail::require(r.loras.size() <= limits.max_loras,
                  where + "too many LoRAs (" + std::to_string(r.loras.size()) + " > " +
                      std::to_string(limits.max_loras) + ")");
  detail::require(r.steps >= 1, where + "steps must be >= 1");
  detail::require(r.arrival >= 0.0, where + "arrival must be >= 0");
  for (const auto& l : r.loras) {
    detail::require(l.size_mib > 0.0, where + "LoRA '" + l.id + "' size must be > 0");
  }
}

// Bandwidth/latency pair describing one storage tier.
struct StorageTier {
  double gibps = 1.0;
  Millis latency_ms = 0.0;

  friend bool operator==(const StorageTier&, const StorageTier&) = default;
};

// Time to move `size` MiB out of `tier`.
inline Millis transfer_ms(Mebibytes size, const StorageTier& tier) {
  detail::require(tier.gibps > 0.0, "tier bandwidth must be > 0");
  detail::require(size >= 0.0, "transfer size must be >= 0");
  return tier.latency_ms + size / (tier.gibps * 1024.0) * 1000.0;
}

enum class Stage : std::uint8_t {
  TextEncode,
  DenoiseCompute,
  ControlnetWait,
  LoraLoadExposed,
  LoraPatch,
  CacheFetch,
  Comm,
  VaeDecode,
};

inline constexpr std::size_t kStageCount = 8;

inline constexpr std::array<Stage, kStageCount> kAllStages = {
    Stage::TextEncode, Stage::DenoiseCompute,  Stage::ControlnetWait, Stage::LoraLoadExposed,
    Stage::LoraPatch,  Stage::CacheFetch,      Stage::Comm,           Stage::VaeDecode,
};

inline constexpr std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::TextEncode: return "text_encode";
    case Stage::DenoiseCompute: return "denoise_compute";
    case Stage::ControlnetWait: return "controlnet_wait";
    case Stage::LoraLoadExposed: return "lora_load_exposed";
    case Stage::LoraPatch: return "lora_patch";
    case Stage::CacheFetch: return "cache_fetch";
    case Stage::Comm: return "comm";
    case Stage::VaeDecode: return "vae_decode";
  }
  return "unknown";
}

// Stage-attributed latency of one request. Stage values sum to total_ms.
struct LatencyBreakdown {
  Millis total_ms = 0.0;
  std::array<Millis, kStageCount> stages{};
  std::optional<int> first_patched_step;
  std::map<std::string, Millis> gpu_ms_consumed;

  Millis& operator[](Stage s) { return stages[static_cast<std::size_t>(s)]; }
  Millis operator[](Stage s) const { return stages[static_cast<std::size_t>(s)]; }

  Millis stage_sum() const {
    Millis sum = 0.0;
    for (auto v : stages) sum += v;
    return sum;
  }
};

}  // namespace addonsim
