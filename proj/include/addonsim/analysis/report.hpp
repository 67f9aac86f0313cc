#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"
#include "addonsim/orchestrator/executor.hpp"
#include "addonsim/orchestrator/throughput.hpp"
#include "addonsim/store/lru_cache.hpp"
#include "addonsim/workload/trace_csv.hpp"

namespace addonsim::analysis {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "0.1.0";

struct PolicyReport {
  std::string policy;
  std::size_t requests = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double mean_latency_ms = 0.0;
  double median_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  double mean_queue_wait_ms = 0.0;
  double mean_service_ms = 0.0;
  std::array<double, kAllStages.size()> mean_stage_ms{};
  double gpu_ms = 0.0;
  // Images per GPU-minute.
  double throughput = 0.0;
  double speedup_vs_baseline = 0.0;
  store::CacheStats controlnet_cache;
  store::CacheStats lora_cache;
  // first_patched_step -> request count, for requests carrying LoRAs.
  std::map<int, std::size_t> patch_step_histogram;
  Millis makespan = 0.0;

  double stage(Stage s) const { return mean_stage_ms[static_cast<std::size_t>(s)]; }
};

struct Report {
  int schema_version = kReportSchemaVersion;
  std::string version = kArtifactVersion;
  std::uint64_t scenario_hash = 0;
  std::uint64_t seed = 0;
  std::string generated_at;
  std::string baseline;
  std::vector<PolicyReport> policies;  // sorted by name

  const PolicyReport& at(const std::string& policy) const {
    for (const auto& p : policies) {
      if (p.policy == policy) return p;
    }
    throw NotFoundError("report has no policy '" + policy + "'");
  }
  bool has(const std::string& policy) const {
    return std::any_of(policies.begin(), policies.end(), [&](const PolicyReport& p) { return p.policy == policy; });
  }
};

namespace stats {

// Sum of the values in ascending order, so permutations give identical bits.
inline double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0);
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : sorted_sum(v) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Nearest-rank percentile.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace stats

// Aggregates one run. The result does not depend on the order of `run.requests`.
inline PolicyReport summarize(const RunResult& run) {
  PolicyReport out;
  out.policy = run.policy;
  out.requests = run.requests.size();
  out.controlnet_cache = run.controlnet_cache;
  out.lora_cache = run.lora_cache;
  out.makespan = run.makespan;

  std::vector<double> latency;
  std::vector<double> wait;
  std::vector<double> service;
  std::vector<double> gpu;
  std::array<std::vector<double>, kAllStages.size()> stage;
  for (const auto& r : run.requests) {
    if (!r.ok) {
      ++out.failed;
      continue;
    }
    ++out.completed;
    latency.push_back(r.latency());
    wait.push_back(r.queue_wait());
    service.push_back(r.breakdown.total_ms);
    for (std::size_t s = 0; s < kAllStages.size(); ++s) stage[s].push_back(r.breakdown.stages[s]);
    for (const auto& [res, ms] : r.breakdown.gpu_ms_consumed) gpu.push_back(ms);
    if (!r.request.loras.empty() && r.breakdown.first_patched_step) {
      ++out.patch_step_histogram[*r.breakdown.first_patched_step];
    }
  }
  out.mean_latency_ms = stats::mean(latency);
  out.median_latency_ms = stats::median(latency);
  out.p95_latency_ms = stats::percentile(latency, 95.0);
  out.mean_queue_wait_ms = stats::mean(wait);
  out.mean_service_ms = stats::mean(service);
  for (std::size_t s = 0; s < kAllStages.size(); ++s) out.mean_stage_ms[s] = stats::mean(stage[s]);
  out.gpu_ms = stats::sorted_sum(gpu);
  out.throughput = out.gpu_ms > 0.0 ? throughput(out.completed, out.gpu_ms) : 0.0;
  return out;
}

// Builds a report from runs; speedups are mean(baseline) / mean(policy).
inline Report build_report(const std::vector<RunResult>& runs, const std::string& baseline) {
  Report rep;
  rep.baseline = baseline;
  for (const auto& run : runs) rep.policies.push_back(summarize(run));
  std::sort(rep.policies.begin(), rep.policies.end(),
            [](const PolicyReport& a, const PolicyReport& b) { return a.policy < b.policy; });
  for (std::size_t i = 1; i < rep.policies.size(); ++i) {
    if (rep.policies[i].policy == rep.policies[i - 1].policy) {
      throw ConfigError("policy '" + rep.policies[i].policy + "' listed twice");
    }
  }
  if (!rep.has(baseline)) throw ConfigError("baseline policy '" + baseline + "' is not among the run policies");
  const double base = rep.at(baseline).mean_latency_ms;
  for (auto& p : rep.policies) {
    p.speedup_vs_baseline = p.mean_latency_ms > 0.0 ? base / p.mean_latency_ms : 0.0;
  }
  return rep;
}

struct Comparison {
  std::string a;
  std::string b;
  double speedup = 0.0;  // mean latency(a) / mean latency(b)
  std::array<double, kAllStages.size()> stage_delta_ms{};  // a - b

  double delta(Stage s) const { return stage_delta_ms[static_cast<std::size_t>(s)]; }
};

inline Comparison compare(const Report& report, const std::string& a, const std::string& b) {
  const auto& pa = report.at(a);
  const auto& pb = report.at(b);
  if (!(pb.mean_latency_ms > 0.0)) throw ValidationError("compare: policy '" + b + "' has zero mean latency");
  Comparison c{a, b, pa.mean_latency_ms / pb.mean_latency_ms, {}};
  for (std::size_t s = 0; s < kAllStages.size(); ++s) c.stage_delta_ms[s] = pa.mean_stage_ms[s] - pb.mean_stage_ms[s];
  return c;
}

namespace json_out {

using OJson = nlohmann::ordered_json;

inline OJson cache_json(const store::CacheStats& s) {
  return OJson{{"accesses", s.accesses},   {"hits", s.hits},
               {"misses", s.misses},       {"evictions", s.evictions},
               {"uncacheable", s.uncacheable}, {"bytes_fetched_mib", s.bytes_fetched},
               {"hit_rate", s.hit_rate()}};
}

inline OJson policy_json(const PolicyReport& p) {
  OJson stages = OJson::object();
  for (auto s : kAllStages) stages[std::string(stage_name(s))] = p.stage(s);
  OJson hist = OJson::object();
  for (const auto& [step, n] : p.patch_step_histogram) hist[std::to_string(step)] = n;
  return OJson{{"policy", p.policy},
               {"requests", p.requests},
               {"completed", p.completed},
               {"failed", p.failed},
               {"mean_latency_ms", p.mean_latency_ms},
               {"median_latency_ms", p.median_latency_ms},
               {"p95_latency_ms", p.p95_latency_ms},
               {"mean_queue_wait_ms", p.mean_queue_wait_ms},
               {"mean_service_ms", p.mean_service_ms},
               {"mean_breakdown_ms", stages},
               {"gpu_ms", p.gpu_ms},
               {"throughput_images_per_gpu_minute", p.throughput},
               {"speedup_vs_baseline", p.speedup_vs_baseline},
               {"controlnet_cache", cache_json(p.controlnet_cache)},
               {"lora_cache", cache_json(p.lora_cache)},
               {"patch_step_histogram", hist},
               {"makespan_ms", p.makespan}};
}

}  // namespace json_out

// Full JSON report. Leave out the timestamp to get a reproducible document.
inline nlohmann::ordered_json report_json(const Report& r, bool include_timestamp = true) {
  nlohmann::ordered_json meta{{"schema_version", r.schema_version},
                              {"version", r.version},
                              {"scenario_hash", r.scenario_hash},
                              {"seed", r.seed}};
  if (include_timestamp) meta["generated_at"] = r.generated_at;
  meta["baseline"] = r.baseline;
  nlohmann::ordered_json policies = nlohmann::ordered_json::array();
  for (const auto& p : r.policies) policies.push_back(json_out::policy_json(p));
  meta["policies"] = std::move(policies);
  return meta;
}

inline std::string report_json_string(const Report& r, bool include_timestamp = true) {
  return report_json(r, include_timestamp).dump(2) + "\n";
}

// One flat row per policy.
inline void write_report_csv(std::ostream& os, const Report& r) {
  using workload::csv::format_double;
  os << "policy,requests,completed,failed,mean_latency_ms,median_latency_ms,p95_latency_ms,"
        "throughput_images_per_gpu_minute,speedup_vs_baseline";
  for (auto s : kAllStages) os << ",mean_" << stage_name(s) << "_ms";
  os << ",controlnet_hit_rate,lora_hit_rate\n";
  for (const auto& p : r.policies) {
    os << p.policy << ',' << p.requests << ',' << p.completed << ',' << p.failed << ','
       << format_double(p.mean_latency_ms) << ',' << format_double(p.median_latency_ms) << ','
       << format_double(p.p95_latency_ms) << ',' << format_double(p.throughput) << ','
       << format_double(p.speedup_vs_baseline);
    for (auto s : kAllStages) os << ',' << format_double(p.stage(s));
    os << ',' << format_double(p.controlnet_cache.hit_rate()) << ',' << format_double(p.lora_cache.hit_rate())
       << '\n';
  }
}

// Long format for bar charts: policy,metric,value.
inline void write_plot_csv(std::ostream& os, const Report& r) {
  using workload::csv::format_double;
  os << "policy,metric,value\n";
  for (const auto& p : r.policies) {
    os << p.policy << ",mean_latency_ms," << format_double(p.mean_latency_ms) << '\n';
    os << p.policy << ",p95_latency_ms," << format_double(p.p95_latency_ms) << '\n';
    os << p.policy << ",throughput_images_per_gpu_minute," << format_double(p.throughput) << '\n';
    os << p.policy << ",speedup_vs_baseline," << format_double(p.speedup_vs_baseline) << '\n';
    for (auto s : kAllStages) os << p.policy << ",stage_" << stage_name(s) << "_ms," << format_double(p.stage(s)) << '\n';
  }
}

inline void write_cache_stats_csv(std::ostream& os, const Report& r) {
  os << "policy,cache,accesses,hits,misses,evictions,uncacheable,bytes_fetched_mib,hit_rate\n";
  for (const auto& p : r.policies) {
    for (const auto& [name, s] : {std::pair{"controlnet", &p.controlnet_cache}, std::pair{"lora", &p.lora_cache}}) {
      os << p.policy << ',' << name << ',' << s->accesses << ',' << s->hits << ',' << s->misses << ','
         << s->evictions << ',' << s->uncacheable << ',' << workload::csv::format_double(s->bytes_fetched) << ','
         << workload::csv::format_double(s->hit_rate()) << '\n';
    }
  }
}

}  // namespace addonsim::analysis
