#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "addonsim/analysis/config.hpp"
#include "addonsim/analysis/report.hpp"
#include "addonsim/orchestrator/executor.hpp"
#include "addonsim/sim/event_log.hpp"
#include "addonsim/store/lru_cache.hpp"
#include "addonsim/workload/trace.hpp"
#include "addonsim/workload/trace_csv.hpp"

namespace addonsim::analysis {

struct OutputSpec {
  std::string dir;  // empty: write nothing
  std::set<std::string> formats{"json", "csv"};
  bool event_log = true;
};

struct Scenario {
  LatencyProfile profile = default_profile();
  ClusterSpec cluster = default_cluster(default_profile());
  std::optional<store::AddonCatalog> catalog;
  std::optional<workload::TraceSpec> trace_spec;
  std::string trace_file;  // used when trace_spec is empty
  std::vector<Policy> policies;
  std::string baseline;
  OutputSpec outputs;
  std::uint64_t seed = 1;
  std::vector<Mebibytes> cache_sweep;
  std::uint64_t hash = 0;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Relative paths inside the scenario resolve against `base_dir`.
inline Scenario scenario_from_json(const Json& j, const std::filesystem::path& base_dir = {},
                                   std::optional<std::uint64_t> seed_override = std::nullopt) {
  Scenario sc;
  ObjectReader r(j, "");
  r.read("seed", sc.seed);
  if (seed_override) sc.seed = *seed_override;

  if (r.has("profile")) sc.profile = profile_from_json(r.raw("profile"));
  sc.cluster = default_cluster(sc.profile);
  if (r.has("cluster")) sc.cluster = cluster_from_json(r.raw("cluster"), sc.profile);
  if (r.has("catalog")) sc.catalog = catalog_from_json(r.raw("catalog"));

  if (!r.has("trace")) throw ConfigError("trace: required");
  const auto& tj = r.raw("trace");
  if (tj.is_object() && tj.contains("file")) {
    ObjectReader tr(tj, "trace");
    std::string file;
    tr.read("file", file);
    tr.finish();
    auto path = std::filesystem::path(file);
    if (path.is_relative()) path = base_dir / path;
    if (!std::filesystem::exists(path)) throw IoError("trace.file: '" + path.string() + "' does not exist");
    sc.trace_file = path.string();
  } else {
    auto spec_json = tj;
    if (spec_json.is_object() && !spec_json.contains("seed")) spec_json["seed"] = sc.seed;
    if (seed_override && spec_json.is_object()) spec_json["seed"] = *seed_override;
    sc.trace_spec = trace_spec_from_json(spec_json);
  }

  if (!r.has("policies")) throw ConfigError("policies: required");
  const auto& pj = r.raw("policies");
  if (!pj.is_array() || pj.empty()) throw ConfigError("policies: expected a non-empty array");
  for (std::size_t i = 0; i < pj.size(); ++i) {
    sc.policies.push_back(policy_from_json(pj[i], "policies[" + std::to_string(i) + "]"));
  }
  sc.baseline = sc.policies.front().name();
  if (r.has("baseline")) {
    const auto& b = r.raw("baseline");
    sc.baseline = policy_from_json(b, "baseline").name();
    bool listed = false;
    for (const auto& p : sc.policies) listed = listed || p.name() == sc.baseline;
    if (!listed) throw ConfigError("baseline: '" + sc.baseline + "' is not in policies");
  }

  if (r.has("outputs")) {
    ObjectReader o(r.raw("outputs"), "outputs");
    o.read("dir", sc.outputs.dir);
    if (o.has("formats")) {
      const auto& f = o.raw("formats");
      if (!f.is_array()) throw ConfigError("outputs.formats: expected an array");
      sc.outputs.formats.clear();
      for (std::size_t i = 0; i < f.size(); ++i) {
        std::string fmt;
        ObjectReader::convert(f[i], fmt, "outputs.formats[" + std::to_string(i) + "]");
        if (fmt != "json" && fmt != "csv") {
          throw ConfigError("outputs.formats[" + std::to_string(i) + "]: expected json or csv");
        }
        sc.outputs.formats.insert(fmt);
      }
    }
    o.read("event_log", sc.outputs.event_log);
    o.finish();
    if (!sc.outputs.dir.empty() && std::filesystem::path(sc.outputs.dir).is_relative()) {
      sc.outputs.dir = (base_dir / sc.outputs.dir).string();
    }
  }
  if (r.has("cache_sweep")) {
    ObjectReader c(r.raw("cache_sweep"), "cache_sweep");
    c.read("capacities_mib", sc.cache_sweep);
    c.finish();
  }
  r.finish();

  auto canonical = j;
  canonical["seed"] = sc.seed;
  sc.hash = fnv1a(canonical.dump());
  return sc;
}

inline Scenario load_scenario(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  const auto j = load_json_file(path);
  return scenario_from_json(j, std::filesystem::path(path).parent_path(), seed_override);
}

struct Workload {
  workload::Trace trace;
  store::AddonCatalog catalog;
};

inline Workload materialize(const Scenario& sc) {
  Workload w;
  if (sc.trace_spec) {
    w.trace = workload::generate(*sc.trace_spec, sc.hash);
    w.catalog = sc.catalog ? *sc.catalog : workload::build_catalog(*sc.trace_spec);
  } else {
    w.trace = workload::ingest(sc.trace_file);
    w.catalog = sc.catalog ? *sc.catalog : detail::catalog_from_requests(w.trace.requests);
  }
  return w;
}

struct ScenarioResult {
  Report report;
  std::vector<RunResult> runs;  // sorted by policy name
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string file_safe(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  }
  return s;
}

namespace io {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  return out;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace io

inline void write_outputs(const Scenario& sc, const ScenarioResult& res) {
  if (sc.outputs.dir.empty()) return;
  const std::filesystem::path dir = sc.outputs.dir;
  io::ensure_dir(dir);
  if (sc.outputs.formats.count("json")) io::open_out(dir / "report.json") << report_json_string(res.report);
  if (sc.outputs.formats.count("csv")) {
    auto csv = io::open_out(dir / "report.csv");
    write_report_csv(csv, res.report);
    auto plot = io::open_out(dir / "plot.csv");
    write_plot_csv(plot, res.report);
    auto cache = io::open_out(dir / "cache_stats.csv");
    write_cache_stats_csv(cache, res.report);
  }
  if (sc.outputs.event_log) {
    for (const auto& run : res.runs) {
      auto out = io::open_out(dir / ("events_" + file_safe(run.policy) + ".ndjson"));
      sim::write_event_log(out, run.events);
    }
  }
}

// Runs every policy on the same trace, concurrently, and assembles the report
// in policy-name order.
inline ScenarioResult run_scenario(const Scenario& sc, bool write = true) {
  if (sc.policies.empty()) throw ConfigError("policies: at least one policy is required");
  const auto wl = materialize(sc);
  std::vector<std::future<RunResult>> jobs;
  for (const auto& p : sc.policies) {
    jobs.push_back(std::async(std::launch::async, [&wl, &sc, p] {
      return simulate(wl.trace.requests, p, sc.cluster, sc.profile, wl.catalog);
    }));
  }
  ScenarioResult res;
  for (auto& j : jobs) res.runs.push_back(j.get());
  std::sort(res.runs.begin(), res.runs.end(), [](const RunResult& a, const RunResult& b) { return a.policy < b.policy; });
  res.report = build_report(res.runs, sc.baseline);
  res.report.scenario_hash = sc.hash;
  res.report.seed = sc.seed;
  res.report.generated_at = utc_timestamp();
  if (write) write_outputs(sc, res);
  return res;
}

inline ScenarioResult run_scenario(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  return run_scenario(load_scenario(path, seed_override));
}

struct CacheSweep {
  std::vector<store::CurvePoint> controlnet;
  std::vector<store::CurvePoint> lora;
};

// Add-on access sequences of a trace, in arrival order.
inline std::vector<store::CacheAccess> controlnet_accesses(const workload::Trace& t, const store::AddonCatalog& cat) {
  std::vector<store::CacheAccess> out;
  for (const auto& r : t.requests) {
    for (const auto& c : r.controlnets) out.push_back({c, cat.controlnet_size(c)});
  }
  return out;
}

inline std::vector<store::CacheAccess> lora_accesses(const workload::Trace& t) {
  std::vector<store::CacheAccess> out;
  for (const auto& r : t.requests) {
    for (const auto& l : r.loras) out.push_back({l.id, l.size_mib});
  }
  return out;
}

inline void write_curve_csv(std::ostream& os, const std::vector<store::CurvePoint>& curve) {
  using workload::csv::format_double;
  os << "capacity_mib,accesses,hits,misses,evictions,uncacheable,bytes_fetched_mib,hit_rate\n";
  for (const auto& p : curve) {
    os << format_double(p.capacity_mib) << ',' << p.stats.accesses << ',' << p.stats.hits << ',' << p.stats.misses
       << ',' << p.stats.evictions << ',' << p.stats.uncacheable << ',' << format_double(p.stats.bytes_fetched) << ','
       << format_double(p.hit_rate) << '\n';
  }
}

inline CacheSweep sweep_cache(const Scenario& sc, std::vector<Mebibytes> capacities) {
  if (capacities.empty()) capacities = sc.cache_sweep;
  if (capacities.empty()) throw ConfigError("cache_sweep.capacities_mib: no capacities given");
  std::sort(capacities.begin(), capacities.end());
  const auto wl = materialize(sc);
  CacheSweep out{store::hit_rate_curve(controlnet_accesses(wl.trace, wl.catalog), capacities),
                 store::hit_rate_curve(lora_accesses(wl.trace), capacities)};
  if (!sc.outputs.dir.empty()) {
    const std::filesystem::path dir = sc.outputs.dir;
    io::ensure_dir(dir);
    auto cn = io::open_out(dir / "cache_sweep_controlnet.csv");
    write_curve_csv(cn, out.controlnet);
    auto lo = io::open_out(dir / "cache_sweep_lora.csv");
    write_curve_csv(lo, out.lora);
  }
  return out;
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSimulation = 3;
inline constexpr int kExitIo = 4;

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const SimulationError*>(&e)) return kExitSimulation;
  return kExitConfig;
}

}  // namespace addonsim::analysis
