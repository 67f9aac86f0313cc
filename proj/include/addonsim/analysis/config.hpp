#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "addonsim/core/cluster.hpp"
#include "addonsim/core/error.hpp"
#include "addonsim/core/profile.hpp"
#include "addonsim/orchestrator/policy.hpp"
#include "addonsim/store/catalog.hpp"
#include "addonsim/workload/trace.hpp"

namespace addonsim::analysis {

using Json = nlohmann::json;

// Reads fields of one JSON object, reporting errors with their key path and
// rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  bool read(const std::string& key, T& out) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    const Json& v = j_.at(key);
    convert(v, out, key_path(key));
    return true;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(key_path(k) + ": unknown key");
    }
  }

  static void convert(const Json& v, double& out, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    out = v.get<double>();
  }
  static void convert(const Json& v, int& out, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    out = v.get<int>();
  }
  static void convert(const Json& v, std::uint64_t& out, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(path + ": expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void convert(const Json& v, bool& out, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
    out = v.get<bool>();
  }
  static void convert(const Json& v, std::string& out, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
    out = v.get<std::string>();
  }
  static void convert(const Json& v, std::vector<double>& out, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      double d = 0.0;
      convert(v[i], d, path + "[" + std::to_string(i) + "]");
      out.push_back(d);
    }
  }
  static void convert(const Json& v, std::map<int, double>& out, const std::string& path) {
    if (!v.is_object()) throw ConfigError(path + ": expected an object of count -> probability");
    out.clear();
    for (const auto& [k, p] : v.items()) {
      int count = 0;
      try {
        std::size_t used = 0;
        count = std::stoi(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw ConfigError(path + "." + k + ": key must be an integer count");
      }
      double prob = 0.0;
      convert(p, prob, path + "." + k);
      out[count] = prob;
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Rethrows precondition failures of a parsed section as configuration errors.
template <typename F>
void as_config(F&& check) {
  try {
    check();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

inline LatencyProfile builtin_profile(const std::string& name, const std::string& path) {
  if (name == kDefaultProfileName) return default_profile();
  throw ConfigError(path + ": unknown built-in profile '" + name + "'");
}

inline LatencyProfile profile_from_json(const Json& j, const std::string& path = "profile") {
  if (j.is_string()) return builtin_profile(j.get<std::string>(), path);
  ObjectReader r(j, path);
  std::string base = kDefaultProfileName;
  r.read("base", base);
  auto p = builtin_profile(base, r.key_path("base"));
  r.read("unet_total_ms", p.unet_total_ms);
  r.read("steps_reference", p.steps_reference);
  r.read("encoder_mid_fraction", p.encoder_mid_fraction);
  r.read("controlnet_factor", p.controlnet_factor);
  r.read("text_encoder_ms", p.text_encoder_ms);
  r.read("vae_decode_ms", p.vae_decode_ms);
  r.read("comm_payload_mib", p.comm_payload_mib);
  r.read("link_gibps", p.link_gibps);
  r.read("link_latency_ms", p.link_latency_ms);
  r.read("remote_fetch_gibps", p.remote_fetch_gibps);
  r.read("remote_fetch_latency_ms", p.remote_fetch_latency_ms);
  r.read("patch_inplace_ms", p.patch_inplace_ms);
  r.read("patch_create_replace_ms_per_100mib", p.patch_create_replace_ms_per_100mib);
  r.read("patch_group_overhead_ms", p.patch_group_overhead_ms);
  r.read("unet_opt_multiplier", p.unet_opt_multiplier);
  if (r.has("unet_opt_gains")) {
    ObjectReader g(r.raw("unet_opt_gains"), r.key_path("unet_opt_gains"));
    g.read("cuda_graphs", p.unet_opt_gains.cuda_graphs);
    g.read("geglu", p.unet_opt_gains.geglu);
    g.read("groupnorm_silu", p.unet_opt_gains.groupnorm_silu);
    g.finish();
  }
  r.finish();
  as_config([&] { validate(p); });
  return p;
}

inline ClusterSpec cluster_from_json(const Json& j, const LatencyProfile& profile, const std::string& path = "cluster") {
  auto c = default_cluster(profile);
  ObjectReader r(j, path);
  r.read("base_workers", c.base_workers);
  r.read("controlnet_gpus", c.controlnet_gpus);
  r.read("gpu_cache_mib", c.gpu_cache_mib);
  r.read("host_cache_mib", c.host_cache_mib);
  r.read("loader_channels", c.loader_channels);
  r.read("controlnet_fetch_tier", c.controlnet_fetch_tier);
  r.read("lora_fetch_tier", c.lora_fetch_tier);
  r.read("lora_cached_tier", c.lora_cached_tier);
  if (r.has("controlnet_replicas")) {
    const auto& reps = r.raw("controlnet_replicas");
    if (!reps.is_object()) throw ConfigError(r.key_path("controlnet_replicas") + ": expected an object");
    for (const auto& [id, n] : reps.items()) {
      int count = 0;
      ObjectReader::convert(n, count, r.key_path("controlnet_replicas") + "." + id);
      c.controlnet_replicas[id] = count;
    }
  }
  if (r.has("tier_bandwidths")) {
    const auto& tiers = r.raw("tier_bandwidths");
    if (!tiers.is_object()) throw ConfigError(r.key_path("tier_bandwidths") + ": expected an object");
    for (const auto& [name, t] : tiers.items()) {
      ObjectReader tr(t, r.key_path("tier_bandwidths") + "." + name);
      StorageTier tier = c.tier_bandwidths.count(name) ? c.tier_bandwidths[name] : StorageTier{};
      tr.read("gibps", tier.gibps);
      tr.read("latency_ms", tier.latency_ms);
      tr.finish();
      c.tier_bandwidths[name] = tier;
    }
  }
  r.finish();
  as_config([&] { validate(c); });
  return c;
}

inline workload::Popularity popularity_from_json(const Json& j, const std::string& path, int n_items) {
  ObjectReader r(j, path);
  workload::Popularity p;
  if (r.has("zipf")) {
    r.read("zipf", p.exponent);
  } else if (r.has("weights")) {
    p.kind = workload::Popularity::Kind::Weights;
    r.read("weights", p.weights);
  } else if (r.has("zipf_calibrated")) {
    ObjectReader c(r.raw("zipf_calibrated"), r.key_path("zipf_calibrated"));
    double top = 0.0;
    double mass = 0.0;
    if (!c.read("top_fraction", top) || !c.read("mass", mass)) {
      throw ConfigError(r.key_path("zipf_calibrated") + ": needs top_fraction and mass");
    }
    c.finish();
    as_config([&] { p.exponent = workload::calibrate_zipf(static_cast<std::size_t>(n_items), top, mass); });
  } else {
    throw ConfigError(path + ": expected one of zipf, weights, zipf_calibrated");
  }
  r.finish();
  return p;
}

inline workload::SizeDistribution size_dist_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  workload::SizeDistribution d;
  std::vector<double> v;
  if (r.read("uniform", v)) {
    if (v.size() != 2) throw ConfigError(r.key_path("uniform") + ": expected [lo, hi]");
    d.lo = v[0];
    d.hi = v[1];
  } else if (r.has("fixed")) {
    double size = 0.0;
    r.read("fixed", size);
    d.kind = workload::SizeDistribution::Kind::Fixed;
    d.choices = {size};
  } else if (r.read("choice", v)) {
    d.kind = workload::SizeDistribution::Kind::Choice;
    d.choices = v;
  } else {
    throw ConfigError(path + ": expected one of uniform, fixed, choice");
  }
  r.finish();
  return d;
}

inline workload::TraceSpec trace_spec_from_json(const Json& j, const std::string& path = "trace") {
  ObjectReader r(j, path);
  workload::TraceSpec s;
  std::string preset;
  if (r.read("preset", preset)) {
    if (preset == "service_a") {
      s = workload::service_a_spec();
    } else if (preset == "service_b") {
      s = workload::service_b_spec();
    } else {
      throw ConfigError(r.key_path("preset") + ": unknown preset '" + preset + "'");
    }
  }
  r.read("duration_ms", s.duration_ms);
  std::size_t max_requests = 0;
  if (r.read("max_requests", max_requests)) s.max_requests = max_requests;
  if (r.has("arrival")) {
    ObjectReader a(r.raw("arrival"), r.key_path("arrival"));
    std::string kind;
    if (!a.read("kind", kind)) throw ConfigError(a.key_path("kind") + ": required");
    if (kind == "poisson") {
      s.arrival.kind = workload::ArrivalProcess::Kind::Poisson;
      a.read("rate_per_s", s.arrival.rate_per_s);
    } else if (kind == "fixed_interval") {
      s.arrival.kind = workload::ArrivalProcess::Kind::FixedInterval;
      a.read("interval_ms", s.arrival.interval_ms);
    } else if (kind == "replay") {
      s.arrival.kind = workload::ArrivalProcess::Kind::Replay;
    } else {
      throw ConfigError(a.key_path("kind") + ": expected poisson, fixed_interval or replay");
    }
    a.finish();
  }
  r.read("controlnet_count_dist", s.controlnet_count_dist);
  r.read("lora_count_dist", s.lora_count_dist);
  r.read("n_controlnets", s.n_controlnets);
  r.read("n_loras", s.n_loras);
  if (r.has("controlnet_popularity")) {
    s.controlnet_popularity = popularity_from_json(r.raw("controlnet_popularity"), r.key_path("controlnet_popularity"),
                                                   s.n_controlnets);
  }
  if (r.has("lora_popularity")) {
    s.lora_popularity = popularity_from_json(r.raw("lora_popularity"), r.key_path("lora_popularity"), s.n_loras);
  }
  if (r.has("lora_size_dist")) s.lora_size_dist = size_dist_from_json(r.raw("lora_size_dist"), r.key_path("lora_size_dist"));
  r.read("steps", s.steps);
  r.read("workers", s.workers);
  r.read("min_worker_gap_ms", s.min_worker_gap_ms);
  r.read("seed", s.seed);
  r.finish();
  as_config([&] { workload::validate(s); });
  return s;
}

inline Policy policy_from_json(const Json& j, const std::string& path) {
  if (j.is_string()) return parse_policy(j.get<std::string>());
  ObjectReader r(j, path);
  std::string name;
  if (!r.read("name", name)) throw ConfigError(r.key_path("name") + ": required");
  int m = 0;
  int k = 0;
  const bool has_m = r.read("M", m);
  const bool has_k = r.read("K", k);
  std::string base = name;
  const bool opt_suffix = base.ends_with("+opt");
  if (opt_suffix) base.resize(base.size() - 4);
  if (base == "CaaS+PipelineLoRA" && has_m) base += "(" + std::to_string(m) + ")";
  if (base == "StepSkip" && has_k) base += "(" + std::to_string(k) + ")";
  auto p = parse_policy(opt_suffix ? base + "+opt" : base);
  if (has_m) p.groups = m;
  if (has_k) p.skip_steps = k;
  bool opt = p.unet_optimized;
  r.read("unet_optimized", opt);
  p.unet_optimized = opt;
  r.finish();
  as_config([&] { validate(p); });
  return p;
}

inline store::AddonCatalog catalog_from_json(const Json& j, const std::string& path = "catalog") {
  ObjectReader r(j, path);
  store::AddonCatalog cat;
  for (const char* key : {"controlnets", "loras"}) {
    if (!r.has(key)) continue;
    const auto& m = r.raw(key);
    if (!m.is_object()) throw ConfigError(r.key_path(key) + ": expected an object of id -> MiB");
    auto& dst = std::string(key) == "controlnets" ? cat.controlnets : cat.loras;
    for (const auto& [id, size] : m.items()) {
      double mib = 0.0;
      ObjectReader::convert(size, mib, r.key_path(key) + "." + id);
      dst[id] = mib;
    }
  }
  r.finish();
  as_config([&] { store::validate(cat); });
  return cat;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace addonsim::analysis
