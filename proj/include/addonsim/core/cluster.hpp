#pragma once

#include <map>
#include <string>

#include "addonsim/core/error.hpp"
#include "addonsim/core/profile.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim {

inline constexpr const char* kHostTier = "host";
inline constexpr const char* kRemoteTier = "remote";

// Simulated GPUs, ControlNet service placement, caches and storage tiers.
struct ClusterSpec {
  int base_workers = 1;
  int controlnet_gpus = 0;
  // ControlNet id -> replicas pinned (preloaded) on service GPUs.
  std::map<ControlNetId, int> controlnet_replicas;
  // Add-on cache per GPU; holds ControlNets on base workers and service GPUs.
  Mebibytes gpu_cache_mib = 16384.0;
  // LoRA cache in each worker's host memory. Zero means every LoRA is fetched remotely.
  Mebibytes host_cache_mib = 0.0;
  std::map<std::string, StorageTier> tier_bandwidths;
  int loader_channels = 2;
  std::string controlnet_fetch_tier = kHostTier;
  std::string lora_fetch_tier = kRemoteTier;
  // Tier a LoRA is read from when it hits the host cache.
  std::string lora_cached_tier = kHostTier;

  const StorageTier& tier(const std::string& name) const {
    auto it = tier_bandwidths.find(name);
    if (it == tier_bandwidths.end()) throw ConfigError("cluster.tier_bandwidths: unknown tier '" + name + "'");
    return it->second;
  }
};

// Host tier is PCIe-class; remote tier follows the profile's fetch bandwidth.
inline ClusterSpec default_cluster(const LatencyProfile& p = {}) {
  ClusterSpec c;
  c.tier_bandwidths[kHostTier] = StorageTier{24.0, 0.0};
  c.tier_bandwidths[kRemoteTier] = StorageTier{p.remote_fetch_gibps, p.remote_fetch_latency_ms};
  return c;
}

inline void validate(const ClusterSpec& c) {
  using detail::require;
  require(c.base_workers >= 1, "cluster.base_workers must be >= 1");
  require(c.controlnet_gpus >= 0, "cluster.controlnet_gpus must be >= 0");
  require(c.gpu_cache_mib >= 0.0, "cluster.gpu_cache_mib must be >= 0");
  require(c.host_cache_mib >= 0.0, "cluster.host_cache_mib must be >= 0");
  require(c.loader_channels >= 1, "cluster.loader_channels must be >= 1");
  for (const auto& [id, n] : c.controlnet_replicas) {
    require(n >= 0, "cluster.controlnet_replicas." + id + " must be >= 0");
    require(n == 0 || c.controlnet_gpus > 0,
            "cluster.controlnet_replicas." + id + ": replicas need controlnet_gpus > 0");
  }
  for (const auto& [name, t] : c.tier_bandwidths) {
    require(t.gibps > 0.0, "cluster.tier_bandwidths." + name + ".gibps must be > 0");
    require(t.latency_ms >= 0.0, "cluster.tier_bandwidths." + name + ".latency_ms must be >= 0");
  }
  for (const auto* key : {&c.controlnet_fetch_tier, &c.lora_fetch_tier, &c.lora_cached_tier}) {
    if (!c.tier_bandwidths.count(*key)) throw ConfigError("cluster: unknown tier '" + *key + "'");
  }
}

}  // namespace addonsim
