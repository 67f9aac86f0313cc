#pragma once

#include <cstdint>
#include <iostream>
#include <list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim::store {

struct CacheStats {
  std::uint64_t accesses = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  // Accesses whose item is larger than the whole cache.
  std::uint64_t uncacheable = 0;
  Mebibytes bytes_fetched = 0.0;

  double hit_rate() const { return accesses == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(accesses); }

  CacheStats& operator+=(const CacheStats& o) {
    accesses += o.accesses;
    hits += o.hits;
    misses += o.misses;
    evictions += o.evictions;
    uncacheable += o.uncacheable;
    bytes_fetched += o.bytes_fetched;
    return *this;
  }

  friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

struct AccessResult {
  bool hit = false;
  Millis fetch_ms = 0.0;
};

// Size-aware LRU cache of add-on weights. Recency is the access order, so
// eviction order is always unique.
class LruCache {
 public:
  LruCache() = default;
  explicit LruCache(Mebibytes capacity_mib) : capacity_(capacity_mib) {
    detail::require(capacity_mib >= 0.0, "cache capacity must be >= 0");
  }

  Mebibytes capacity() const { return capacity_; }
  Mebibytes used() const { return used_; }
  const CacheStats& stats() const { return stats_; }
  std::size_t size() const { return index_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  // Most recent first.
  std::vector<std::string> resident() const {
    std::vector<std::string> out;
    out.reserve(order_.size());
    for (const auto& e : order_) out.push_back(e.first);
    return out;
  }

  AccessResult access(const std::string& id, Mebibytes size_mib, const StorageTier& fetch_tier) {
    const bool hit = touch(id, size_mib);
    return AccessResult{hit, hit ? 0.0 : transfer_ms(size_mib, fetch_tier)};
  }

  // Access without a fetch-cost model. Returns whether it hit.
  bool touch(const std::string& id, Mebibytes size_mib) {
    detail::require(size_mib >= 0.0, "cache item size must be >= 0");
    ++stats_.accesses;
    if (auto it = index_.find(id); it != index_.end()) {
      ++stats_.hits;
      order_.splice(order_.begin(), order_, it->second);
      return true;
    }
    ++stats_.misses;
    stats_.bytes_fetched += size_mib;
    if (size_mib > capacity_) {
      ++stats_.uncacheable;
      return false;
    }
    while (used_ + size_mib > capacity_) evict_one();
    order_.emplace_front(id, size_mib);
    index_[id] = order_.begin();
    used_ += size_mib;
    return false;
  }

  // Places an item without counting an access (service deployment warm-up).
  void preload(const std::string& id, Mebibytes size_mib) {
    if (contains(id) || size_mib > capacity_) return;
    while (used_ + size_mib > capacity_) evict_one();
    order_.emplace_front(id, size_mib);
    index_[id] = order_.begin();
    used_ += size_mib;
  }

 private:
  void evict_one() {
    const auto& victim = order_.back();
    used_ -= victim.second;
    index_.erase(victim.first);
    order_.pop_back();
    ++stats_.evictions;
    if (order_.empty()) used_ = 0.0;
  }

  Mebibytes capacity_ = 0.0;
  Mebibytes used_ = 0.0;
  std::list<std::pair<std::string, Mebibytes>> order_;
  std::unordered_map<std::string, std::list<std::pair<std::string, Mebibytes>>::iterator> index_;
  CacheStats stats_;
};

struct CacheAccess {
  std::string id;
  Mebibytes size_mib = 0.0;
};

struct CurvePoint {
  Mebibytes capacity_mib = 0.0;
  double hit_rate = 0.0;
  CacheStats stats;
};

// One full LRU simulation per capacity.
inline std::vector<CurvePoint> hit_rate_curve(const std::vector<CacheAccess>& trace,
                                              const std::vector<Mebibytes>& capacities) {
  for (std::size_t i = 1; i < capacities.size(); ++i) {
    detail::require(capacities[i - 1] <= capacities[i], "hit_rate_curve: capacities must be sorted ascending");
  }
  if (trace.empty()) {
    std::cerr << "warning: hit_rate_curve called with an empty trace\n";
    return {};
  }
  std::vector<CurvePoint> curve;
  curve.reserve(capacities.size());
  for (auto cap : capacities) {
    LruCache cache(cap);
    for (const auto& a : trace) cache.touch(a.id, a.size_mib);
    curve.push_back(CurvePoint{cap, cache.stats().hit_rate(), cache.stats()});
  }
  return curve;
}

}  // namespace addonsim::store
