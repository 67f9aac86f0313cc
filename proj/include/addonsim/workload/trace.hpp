#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"
#include "addonsim/store/catalog.hpp"
#include "addonsim/workload/zipf.hpp"

namespace addonsim::workload {

struct ArrivalProcess {
  enum class Kind : std::uint8_t { Poisson, FixedInterval, Replay };
  Kind kind = Kind::FixedInterval;
  double rate_per_s = 1.0;       // Poisson
  Millis interval_ms = 1000.0;   // FixedInterval
};

// Item popularity: Zipf over ranks, or explicit per-rank weights.
struct Popularity {
  enum class Kind : std::uint8_t { Zipf, Weights };
  Kind kind = Kind::Zipf;
  double exponent = 1.0;
  std::vector<double> weights;

  static Popularity zipf(double a) { return {Kind::Zipf, a, {}}; }
};

struct SizeDistribution {
  enum class Kind : std::uint8_t { Uniform, Fixed, Choice };
  Kind kind = Kind::Uniform;
  Mebibytes lo = 100.0;
  Mebibytes hi = 500.0;
  std::vector<Mebibytes> choices;  // Fixed uses choices[0]
};

// LoRA sizes cited for the microbenchmarks.
inline constexpr Mebibytes kLoraFixture341 = 341.0;
inline constexpr Mebibytes kLoraFixture384 = 384.0;
inline constexpr Mebibytes kLoraFixture456 = 456.0;

// Long-tail LoRA popularity. No published parameters; this is an assumption.
inline constexpr double kDefaultLoraZipf = 0.6;

struct TraceSpec {
  Millis duration_ms = 60'000.0;
  ArrivalProcess arrival{};
  std::optional<std::size_t> max_requests;
  std::map<int, double> controlnet_count_dist{{1, 0.305}, {2, 0.695}};
  std::map<int, double> lora_count_dist{{0, 0.002}, {1, 0.088}, {2, 0.91}};
  int n_controlnets = 46;
  int n_loras = 7000;
  Popularity controlnet_popularity = Popularity::zipf(1.0);
  Popularity lora_popularity = Popularity::zipf(kDefaultLoraZipf);
  SizeDistribution lora_size_dist{};
  int steps = 50;
  // Round-robin worker count used to keep per-worker gaps.
  int workers = 1;
  Millis min_worker_gap_ms = 1000.0;
  std::uint64_t seed = 1;
};

// Service A: 46 ControlNets, 11% of them take 98% of invocations; ~7k LoRAs.
inline TraceSpec service_a_spec() {
  TraceSpec s;
  s.controlnet_count_dist = {{1, 0.305}, {2, 0.695}};
  s.lora_count_dist = {{0, 0.002}, {1, 0.088}, {2, 0.91}};
  s.n_controlnets = 46;
  s.n_loras = 7000;
  s.controlnet_popularity = Popularity::zipf(calibrate_zipf(46, 0.11, 0.98));
  return s;
}

// Service B: 94 ControlNets, 9% of them take 95% of invocations; ~7.5k LoRAs.
inline TraceSpec service_b_spec() {
  TraceSpec s;
  s.controlnet_count_dist = {{0, 0.019}, {1, 0.251}, {2, 0.699}, {3, 0.031}};
  s.lora_count_dist = {{0, 0.072}, {1, 0.736}, {2, 0.192}};
  s.n_controlnets = 94;
  s.n_loras = 7500;
  s.controlnet_popularity = Popularity::zipf(calibrate_zipf(94, 0.09, 0.95));
  return s;
}

struct Provenance {
  enum class Kind : std::uint8_t { Generated, Ingested };
  Kind kind = Kind::Generated;
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
  std::string file;
};

struct Trace {
  std::vector<Request> requests;
  Provenance provenance;
};

inline std::string controlnet_id(int rank) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "cn%03d", rank);
  return buf;
}

inline std::string lora_id(int rank) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "lora%05d", rank);
  return buf;
}

inline void validate_count_dist(const std::map<int, double>& dist, int distinct, const std::string& key) {
  detail::require(!dist.empty(), key + ": distribution is empty");
  double sum = 0.0;
  for (const auto& [count, p] : dist) {
    detail::require(count >= 0, key + ": counts must be >= 0");
    detail::require(p >= 0.0, key + ": probabilities must be >= 0");
    if (p > 0.0) {
      detail::require(count <= distinct, key + ": count " + std::to_string(count) + " exceeds " +
                                             std::to_string(distinct) + " distinct ids");
    }
    sum += p;
  }
  detail::require(std::abs(sum - 1.0) <= 1e-9, key + ": probabilities must sum to 1");
}

inline void validate(const TraceSpec& s) {
  detail::require(s.duration_ms >= 0.0, "trace.duration_ms must be >= 0");
  detail::require(s.n_controlnets >= 0 && s.n_loras >= 0, "trace: id counts must be >= 0");
  detail::require(s.steps >= 1, "trace.steps must be >= 1");
  detail::require(s.workers >= 1, "trace.workers must be >= 1");
  detail::require(s.min_worker_gap_ms >= 0.0, "trace.min_worker_gap_ms must be >= 0");
  if (s.arrival.kind == ArrivalProcess::Kind::Poisson) {
    detail::require(s.arrival.rate_per_s > 0.0, "trace.arrival.rate must be > 0");
  }
  if (s.arrival.kind == ArrivalProcess::Kind::FixedInterval) {
    detail::require(s.arrival.interval_ms > 0.0, "trace.arrival.interval_ms must be > 0");
  }
  validate_count_dist(s.controlnet_count_dist, s.n_controlnets, "trace.controlnet_count_dist");
  validate_count_dist(s.lora_count_dist, s.n_loras, "trace.lora_count_dist");
  for (const auto* pop : {&s.controlnet_popularity, &s.lora_popularity}) {
    if (pop->kind == Popularity::Kind::Zipf) {
      detail::require(pop->exponent >= 0.0, "trace popularity: Zipf exponent must be >= 0");
    } else {
      for (double w : pop->weights) detail::require(w >= 0.0, "trace popularity: weights must be >= 0");
    }
  }
  if (s.controlnet_popularity.kind == Popularity::Kind::Weights) {
    detail::require(s.controlnet_popularity.weights.size() == static_cast<std::size_t>(s.n_controlnets),
                    "trace.controlnet_popularity: need one weight per ControlNet");
  }
  if (s.lora_popularity.kind == Popularity::Kind::Weights) {
    detail::require(s.lora_popularity.weights.size() == static_cast<std::size_t>(s.n_loras),
                    "trace.lora_popularity: need one weight per LoRA");
  }
  const auto& sz = s.lora_size_dist;
  switch (sz.kind) {
    case SizeDistribution::Kind::Uniform:
      detail::require(sz.lo > 0.0 && sz.hi >= sz.lo, "trace.lora_size_dist: need 0 < lo <= hi");
      break;
    case SizeDistribution::Kind::Fixed:
    case SizeDistribution::Kind::Choice:
      detail::require(!sz.choices.empty(), "trace.lora_size_dist: need at least one size");
      for (auto c : sz.choices) detail::require(c > 0.0, "trace.lora_size_dist: sizes must be > 0");
      break;
  }
}

namespace sampling {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Cumulative distribution over item ranks, sampled by binary search.
class Sampler {
 public:
  explicit Sampler(std::vector<double> weights) : cdf_(std::move(weights)) {
    double acc = 0.0;
    for (auto& w : cdf_) {
      acc += w;
      w = acc;
    }
    total_ = acc;
  }

  std::size_t draw(std::mt19937_64& rng) const {
    const double u = uniform01(rng) * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<std::size_t>(it - cdf_.begin());
  }

  // `count` distinct ranks; rejection first, exclusion scan if that stalls.
  std::vector<std::size_t> draw_distinct(std::mt19937_64& rng, std::size_t count) const {
    std::vector<std::size_t> out;
    int attempts = 0;
    while (out.size() < count && attempts < 64) {
      const auto r = draw(rng);
      ++attempts;
      if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
    }
    while (out.size() < count) {
      double remaining = 0.0;
      for (std::size_t i = 0; i < cdf_.size(); ++i) {
        if (std::find(out.begin(), out.end(), i) == out.end()) remaining += weight(i);
      }
      double u = uniform01(rng) * remaining;
      std::size_t pick = cdf_.size();
      for (std::size_t i = 0; i < cdf_.size(); ++i) {
        if (std::find(out.begin(), out.end(), i) != out.end()) continue;
        pick = i;
        u -= weight(i);
        if (u < 0.0) break;
      }
      out.push_back(pick);
    }
    return out;
  }

  double weight(std::size_t i) const { return i == 0 ? cdf_[0] : cdf_[i] - cdf_[i - 1]; }
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
  double total_ = 0.0;
};

inline std::vector<double> popularity_weights(const Popularity& p, int n) {
  if (p.kind == Popularity::Kind::Weights) return p.weights;
  return zipf_weights(static_cast<std::size_t>(n), p.exponent);
}

inline int draw_count(const std::map<int, double>& dist, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last = dist.begin()->first;
  for (const auto& [count, p] : dist) {
    acc += p;
    if (p > 0.0) last = count;
    if (u < acc) return count;
  }
  return last;
}

inline Mebibytes draw_size(const SizeDistribution& d, std::mt19937_64& rng) {
  switch (d.kind) {
    case SizeDistribution::Kind::Uniform: return d.lo + (d.hi - d.lo) * uniform01(rng);
    case SizeDistribution::Kind::Fixed: return d.choices.front();
    case SizeDistribution::Kind::Choice: {
      const auto i = std::min(d.choices.size() - 1, static_cast<std::size_t>(uniform01(rng) * d.choices.size()));
      return d.choices[i];
    }
  }
  return d.lo;
}

inline constexpr std::uint64_t kSizeStream = 0x9e3779b97f4a7c15ULL;

}  // namespace sampling

// LoRA sizes are a property of the id, drawn from their own RNG stream.
inline std::vector<Mebibytes> lora_sizes(const TraceSpec& s) {
  std::mt19937_64 rng(s.seed ^ sampling::kSizeStream);
  std::vector<Mebibytes> out(static_cast<std::size_t>(s.n_loras));
  for (auto& v : out) v = sampling::draw_size(s.lora_size_dist, rng);
  return out;
}

inline store::AddonCatalog build_catalog(const TraceSpec& s) {
  store::AddonCatalog cat;
  for (int i = 0; i < s.n_controlnets; ++i) cat.controlnets.emplace(controlnet_id(i), store::kDefaultControlNetMib);
  const auto sizes = lora_sizes(s);
  for (int i = 0; i < s.n_loras; ++i) cat.loras.emplace(lora_id(i), sizes[static_cast<std::size_t>(i)]);
  return cat;
}

// Deterministic in `spec.seed`. Ids are drawn by popularity without
// replacement inside a request; rank 0 is the most popular id.
inline Trace generate(const TraceSpec& spec, std::uint64_t spec_hash = 0) {
  validate(spec);
  if (spec.arrival.kind == ArrivalProcess::Kind::Replay) {
    throw ValidationError("trace.arrival: replay arrivals come from an ingested trace file");
  }
  std::mt19937_64 rng(spec.seed);
  const sampling::Sampler cn_sampler(sampling::popularity_weights(spec.controlnet_popularity, spec.n_controlnets));
  const sampling::Sampler lora_sampler(sampling::popularity_weights(spec.lora_popularity, spec.n_loras));
  const auto sizes = lora_sizes(spec);

  Trace trace;
  trace.provenance = Provenance{Provenance::Kind::Generated, spec_hash, spec.seed, {}};
  const auto workers = static_cast<std::size_t>(spec.workers);
  Millis raw = 0.0;
  for (std::size_t i = 0;; ++i) {
    if (spec.max_requests && i >= *spec.max_requests) break;
    if (spec.arrival.kind == ArrivalProcess::Kind::FixedInterval) {
      raw = static_cast<double>(i) * spec.arrival.interval_ms;
    } else {
      raw += -std::log(1.0 - sampling::uniform01(rng)) / spec.arrival.rate_per_s * 1000.0;
    }
    Millis t = raw;
    if (i > 0) t = std::max(t, trace.requests[i - 1].arrival);
    if (i >= workers) t = std::max(t, trace.requests[i - workers].arrival + spec.min_worker_gap_ms);
    if (t >= spec.duration_ms) break;

    Request r;
    r.id = i;
    r.arrival = t;
    r.steps = spec.steps;
    const int n_cn = sampling::draw_count(spec.controlnet_count_dist, rng);
    const int n_lora = sampling::draw_count(spec.lora_count_dist, rng);
    for (auto rank : cn_sampler.draw_distinct(rng, static_cast<std::size_t>(n_cn))) {
      r.controlnets.push_back(controlnet_id(static_cast<int>(rank)));
    }
    for (auto rank : lora_sampler.draw_distinct(rng, static_cast<std::size_t>(n_lora))) {
      r.loras.push_back(LoraRef{lora_id(static_cast<int>(rank)), sizes[rank]});
    }
    trace.requests.push_back(std::move(r));
  }
  return trace;
}

struct ShardVolume {
  std::size_t requests = 0;
  std::size_t unique_loras = 0;
  std::size_t unique_controlnets = 0;
};

// Requests dealt round-robin to `worker_shards` workers; distinct add-ons each worker sees.
inline std::vector<ShardVolume> unique_addons_per_volume(const Trace& trace, std::size_t worker_shards) {
  detail::require(worker_shards >= 1, "worker_shards must be >= 1");
  std::vector<std::set<std::string>> loras(worker_shards);
  std::vector<std::set<std::string>> cns(worker_shards);
  std::vector<ShardVolume> out(worker_shards);
  for (std::size_t i = 0; i < trace.requests.size(); ++i) {
    const auto shard = i % worker_shards;
    const auto& r = trace.requests[i];
    ++out[shard].requests;
    for (const auto& c : r.controlnets) cns[shard].insert(c);
    for (const auto& l : r.loras) loras[shard].insert(l.id);
  }
  for (std::size_t s = 0; s < worker_shards; ++s) {
    out[s].unique_loras = loras[s].size();
    out[s].unique_controlnets = cns[s].size();
  }
  return out;
}

}  // namespace addonsim::workload
