#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "addonsim/core/cluster.hpp"
#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim::store {

struct FetchRequest {
  std::string id;
  Mebibytes size_mib = 0.0;
};

struct FetchCompletion {
  std::string id;
  std::size_t channel = 0;
  Millis start = 0.0;
  Millis complete = 0.0;
};

// Parallel loader channels. Fetches on distinct channels overlap fully;
// beyond the channel count they queue FIFO on the earliest-free channel.
class LoaderPool {
 public:
  explicit LoaderPool(std::size_t channels) : free_at_(channels, 0.0) {
    detail::require(channels >= 1, "loader channels must be >= 1");
  }

  FetchCompletion submit(const FetchRequest& f, const StorageTier& tier, Millis now = 0.0) {
    auto it = std::min_element(free_at_.begin(), free_at_.end());
    const auto channel = static_cast<std::size_t>(it - free_at_.begin());
    const Millis start = std::max(now, *it);
    *it = start + transfer_ms(f.size_mib, tier);
    return FetchCompletion{f.id, channel, start, *it};
  }

  std::size_t channels() const { return free_at_.size(); }

 private:
  std::vector<Millis> free_at_;
};

// Completion offsets (from 0) for a batch of fetches issued together.
inline std::vector<FetchCompletion> fetch(const std::vector<FetchRequest>& batch, const std::string& tier_name,
                                          const ClusterSpec& cluster, std::size_t channels) {
  const auto& tier = cluster.tier(tier_name);
  LoaderPool pool(channels);
  std::vector<FetchCompletion> out;
  out.reserve(batch.size());
  for (const auto& f : batch) out.push_back(pool.submit(f, tier));
  return out;
}

inline Millis fetch(const std::string& id, Mebibytes size_mib, const std::string& tier_name,
                    const ClusterSpec& cluster, std::size_t channels) {
  return fetch({FetchRequest{id, size_mib}}, tier_name, cluster, channels).front().complete;
}

}  // namespace addonsim::store
