// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "addonsim/analysis/gustafson.hpp"
#include "addonsim/analysis/report.hpp"
#include "addonsim/analysis/runner.hpp"
#include "addonsim/lora/merge.hpp"
#include "addonsim/orchestrator/executor.hpp"
#include "addonsim/orchestrator/policy.hpp"
#include "addonsim/sim/event_log.hpp"
#include "addonsim/store/lru_cache.hpp"
#include "addonsim/workload/trace.hpp"
#include "addonsim/workload/trace_csv.hpp"
#include "addonsim/workload/zipf.hpp"

using namespace addonsim;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Every simulated run is recorded so the determinism criterion can replay it.
struct Replay {
  std::string label;
  std::function<std::string()> fingerprint;
};
std::vector<Replay> g_replays;

std::string fingerprint(const RunResult& run) {
  analysis::Report rep = analysis::build_report({run}, run.policy);
  return sim::event_log_string(run.events) + analysis::report_json_string(rep, false);
}

RunResult recorded(const std::string& label, std::vector<Request> reqs, Policy policy, ClusterSpec cluster,
                   LatencyProfile profile) {
  auto run = simulate(reqs, policy, cluster, profile);
  g_replays.push_back({label, [=] { return fingerprint(simulate(reqs, policy, cluster, profile)); }});
  return run;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Request make(std::uint64_t id, double arrival, std::vector<std::string> cns, std::vector<LoraRef> loras = {}) {
  Request r;
  r.id = id;
  r.arrival = arrival;
  r.controlnets = std::move(cns);
  r.loras = std::move(loras);
  return r;
}

std::vector<std::string> controlnets(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("cn" + std::to_string(i));
  return out;
}

// Warm-cache service time: the same request twice on one worker, second one measured.
Millis warm_service(const Policy& policy, int n, int steps, const LatencyProfile& p, const std::string& label) {
  auto cluster = default_cluster(p);
  cluster.controlnet_gpus = std::max(n, 1);
  for (const auto& id : controlnets(n)) cluster.controlnet_replicas[id] = 1;
  auto first = make(0, 0.0, controlnets(n));
  first.steps = steps;
  auto second = make(1, 1e7, controlnets(n));
  second.steps = steps;
  const auto run = recorded(label, {first, second}, policy, cluster, p);
  if (!run.requests[1].ok) throw SimulationError(label + ": " + run.requests[1].error);
  return run.requests[1].breakdown.total_ms;
}

LatencyProfile calibrated() { return analysis::calibrate_encoder_mid_fraction(default_profile(), 3, 50, 0.55); }

Outcome controlnet_microbenchmark() {
  const auto p = calibrated();
  const auto f = analysis::fractions_from_profile(p, 3, 50);
  const double serial = warm_service(serial_colocated(), 3, 50, p, "c1-serial");
  const double parallel = warm_service(caas(), 3, 50, p, "c1-caas");
  const double speedup = serial / parallel;
  const double bound = analysis::gustafson(0.55, 0.45, 4);
  Outcome o;
  o.ok = std::abs(f.serial - 0.55) <= 0.01 && std::abs(f.parallel - 0.45) <= 0.01 &&
         std::abs(speedup - 2.2) <= 0.1 && speedup <= bound && std::abs(bound - 2.36) <= 0.02;
  o.detail = "s=" + fmt("%.4f", f.serial) + " p=" + fmt("%.4f", f.parallel) + " speedup=" + fmt("%.3f", speedup) +
             " bound=" + fmt("%.3f", bound);
  return o;
}

Outcome gustafson_sweep() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  double worst = 0.0;
  const int profiles = 120;
  for (int i = 0; i < profiles; ++i) {
    auto p = default_profile();
    p.unet_total_ms = 500.0 + 4500.0 * u(rng);
    p.encoder_mid_fraction = 0.1 + 0.8 * u(rng);
    p.controlnet_factor = 1.0 + 1.5 * u(rng);
    p.text_encoder_ms = 50.0 * u(rng);
    p.vae_decode_ms = 300.0 * u(rng);
    p.comm_payload_mib = 500.0 * u(rng);
    p.link_gibps = 10.0 + 400.0 * u(rng);
    p.link_latency_ms = 2.0 * u(rng);
    const int n = 1 + static_cast<int>(rng() % 3);
    const int steps = 10 + static_cast<int>(rng() % 41);
    const auto tag = "c2-" + std::to_string(i);
    const double speedup = warm_service(serial_colocated(), n, steps, p, tag + "-serial") /
                           warm_service(caas(), n, steps, p, tag + "-caas");
    const double bound = analysis::gustafson_bound(p, n, steps);
    worst = std::max(worst, speedup / bound);
    if (speedup > bound * (1.0 + 1e-12)) ++violations;
  }
  return {violations == 0, "profiles=" + std::to_string(profiles) + " violations=" + std::to_string(violations) +
                               " max(speedup/bound)=" + fmt("%.4f", worst)};
}

Outcome lora_patch_step() {
  const auto p = default_profile();
  auto cluster = default_cluster(p);
  cluster.controlnet_gpus = 1;
  cluster.tier_bandwidths[kRemoteTier] = StorageTier{1.0, 0.0};
  const auto with = recorded("c3-async", {make(0, 0.0, {}, {{"style", 456.0}})}, caas_async_lora(), cluster, p);
  const auto without = recorded("c3-none", {make(0, 0.0, {})}, no_addon(), cluster, p);
  const auto& bd = with.requests[0].breakdown;
  const int first = bd.first_patched_step.value_or(-1);
  const double unpatched = static_cast<double>(first - 1) / 50.0;
  const double exposed = bd.total_ms - without.requests[0].breakdown.total_ms;
  Outcome o;
  o.ok = first >= 10 && first <= 12 && unpatched <= 0.30 && std::abs(exposed - 100.0) <= 1.0;
  o.detail = "first_patched_step=" + std::to_string(first) + " unpatched=" + fmt("%.0f%%", unpatched * 100.0) +
             " exposed=" + fmt("%.3f ms", exposed);
  return o;
}

Outcome serial_lora_cost() {
  const auto p = default_profile();
  const auto cluster = default_cluster(p);
  const auto with = recorded("c4-serial", {make(0, 0.0, {}, {{"style", 384.0}})}, serial_colocated(), cluster, p);
  const auto without = recorded("c4-none", {make(0, 0.0, {})}, no_addon(), cluster, p);
  const auto& bd = with.requests[0].breakdown;
  const double fetch = bd[Stage::LoraLoadExposed];
  const double patch = bd[Stage::LoraPatch];
  const double expected_fetch = transfer_ms(384.0, cluster.tier(kRemoteTier));
  const double added = bd.total_ms - without.requests[0].breakdown.total_ms;
  Outcome o;
  o.ok = std::abs(fetch - expected_fetch) <= 1e-9 && std::abs(fetch - 490.0) <= 1.0 &&
         std::abs(patch - 2000.0) <= 1e-9 && std::abs(added - (fetch + patch)) <= 1e-6;
  o.detail = "fetch=" + fmt("%.2f ms", fetch) + " patch=" + fmt("%.2f ms", patch) + " added=" + fmt("%.2f ms", added);
  return o;
}

Outcome end_to_end() {
  const auto p = default_profile();
  const int n = 4;
  std::vector<Request> reqs;
  for (int i = 0; i < n; ++i) {
    reqs.push_back(make(i, 30000.0 * i, controlnets(3),
                        {{"style" + std::to_string(2 * i), 384.0}, {"style" + std::to_string(2 * i + 1), 456.0}}));
  }
  // One request per worker: every serial request starts with cold caches.
  auto serial_cluster = default_cluster(p);
  serial_cluster.base_workers = n;
  auto caas_cluster = serial_cluster;
  caas_cluster.controlnet_gpus = 3;
  for (const auto& id : controlnets(3)) caas_cluster.controlnet_replicas[id] = 1;
  const auto serial = recorded("c5-serial", reqs, serial_colocated(), serial_cluster, p);
  const auto fast = recorded("c5-caas", reqs, caas_async_lora(true), caas_cluster, p);
  const auto rep = analysis::build_report({serial, fast}, serial.policy);
  const auto& a = rep.at(serial.policy);
  const auto& b = rep.at(fast.policy);
  const double speedup = b.speedup_vs_baseline;
  const double tput = b.throughput / a.throughput;
  Outcome o;
  o.ok = a.completed == n && b.completed == n && speedup >= 4.0 && tput >= 1.5;
  o.detail = "latency " + fmt("%.0f", a.mean_latency_ms) + " -> " + fmt("%.0f ms", b.mean_latency_ms) +
             " speedup=" + fmt("%.3f", speedup) + " throughput_ratio=" + fmt("%.3f", tput);
  return o;
}

// Independent vector LRU for unit-size items.
std::size_t naive_hits(const std::vector<int>& trace, std::size_t capacity) {
  std::vector<int> stack;
  std::size_t hits = 0;
  for (int id : trace) {
    auto it = std::find(stack.begin(), stack.end(), id);
    if (it != stack.end()) {
      ++hits;
      stack.erase(it);
    } else if (stack.size() == capacity && capacity > 0) {
      stack.pop_back();
    }
    if (capacity > 0) stack.insert(stack.begin(), id);
  }
  return hits;
}

Outcome lru_stack_property() {
  std::mt19937_64 rng(99);
  const std::vector<Mebibytes> caps{0, 1, 2, 4, 8, 16, 32};
  int monotone_violations = 0;
  int reference_mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t len = 1 + rng() % (t % 100 == 0 ? 10000 : 1500);
    const int ids = 2 + static_cast<int>(rng() % 48);
    std::vector<int> raw;
    std::vector<store::CacheAccess> trace;
    for (std::size_t i = 0; i < len; ++i) {
      raw.push_back(static_cast<int>(rng() % ids));
      trace.push_back({"x" + std::to_string(raw.back()), 1.0});
    }
    const auto curve = store::hit_rate_curve(trace, caps);
    for (std::size_t i = 0; i < caps.size(); ++i) {
      if (curve[i].stats.hits != naive_hits(raw, static_cast<std::size_t>(caps[i]))) ++reference_mismatches;
      if (i > 0 && curve[i].hit_rate < curve[i - 1].hit_rate) ++monotone_violations;
    }
  }
  return {monotone_violations == 0 && reference_mismatches == 0,
          "traces=1000 monotone_violations=" + std::to_string(monotone_violations) +
              " reference_mismatches=" + std::to_string(reference_mismatches)};
}

Outcome zipf_calibration() {
  auto mass = [](std::size_t n, std::size_t k, double a) {
    long double top = 0.0L;
    long double all = 0.0L;
    for (std::size_t r = 1; r <= n; ++r) {
      const long double w = std::pow(static_cast<long double>(r), -static_cast<long double>(a));
      all += w;
      if (r <= k) top += w;
    }
    return static_cast<double>(top / all);
  };
  Outcome o;
  for (const auto& [n, top, target] : {std::tuple{94u, 0.09, 0.95}, std::tuple{46u, 0.11, 0.98}}) {
    const double a = workload::calibrate_zipf(n, top, target);
    const auto k = static_cast<std::size_t>(std::max(1.0, std::round(n * top)));
    const double got = mass(n, k, a);
    o.ok = o.ok && std::abs(got - target) <= 1e-6;
    o.detail += "n=" + std::to_string(n) + " a=" + fmt("%.6f", a) + " mass=" + fmt("%.8f ", got);
  }
  return o;
}

Outcome trace_fidelity() {
  struct Table {
    std::string name;
    workload::TraceSpec spec;
    std::map<int, double> cn;
    std::map<int, double> lora;
  };
  const std::vector<Table> tables{
      {"A", workload::service_a_spec(), {{1, 0.305}, {2, 0.695}}, {{0, 0.002}, {1, 0.088}, {2, 0.91}}},
      {"B", workload::service_b_spec(), {{0, 0.019}, {1, 0.251}, {2, 0.699}, {3, 0.031}},
       {{0, 0.072}, {1, 0.736}, {2, 0.192}}},
  };
  Outcome o;
  double worst = 0.0;
  for (const auto& t : tables) {
    auto spec = t.spec;
    spec.arrival = workload::ArrivalProcess{workload::ArrivalProcess::Kind::FixedInterval, 1.0, 1000.0};
    spec.duration_ms = 1e12;
    spec.max_requests = 10000;
    spec.seed = 11;
    const auto trace = workload::generate(spec);
    g_replays.push_back({"c8-" + t.name, [spec] {
                           std::ostringstream os;
                           workload::export_trace(os, workload::generate(spec));
                           return os.str();
                         }});
    std::map<int, double> cn;
    std::map<int, double> lo;
    for (const auto& r : trace.requests) {
      cn[static_cast<int>(r.controlnets.size())] += 1e-4;
      lo[static_cast<int>(r.loras.size())] += 1e-4;
    }
    for (const auto& [want, got] : {std::pair{&t.cn, &cn}, std::pair{&t.lora, &lo}}) {
      for (const auto& [k, p] : *want) worst = std::max(worst, std::abs((got->count(k) ? got->at(k) : 0.0) - p));
      for (const auto& [k, p] : *got) {
        if (!want->count(k)) worst = std::max(worst, p);
      }
    }
    o.ok = o.ok && trace.requests.size() == 10000;
  }
  o.ok = o.ok && worst <= 0.015;
  o.detail = "n=10000 per service, max cell error=" + fmt("%.2f pp", worst * 100.0);
  return o;
}

Outcome merge_numerics() {
  std::mt19937_64 rng(5150);
  float round_trip = 0.0f;
  float replace = 0.0f;
  float linear = 0.0f;
  for (int i = 0; i < 100; ++i) {
    const std::size_t h1 = 64 + rng() % 449;
    const std::size_t h2 = 64 + rng() % 449;
    const std::size_t r1 = 1 + rng() % 32;
    const std::size_t r2 = 1 + rng() % 32;
    lora::Layer layer{lora::random_matrix(h1, h2, rng), {}};
    const auto original = layer.W;
    const lora::LoRAAdapter a{"a", lora::random_matrix(h1, r1, rng, -0.5f, 0.5f),
                              lora::random_matrix(r1, h2, rng, -0.5f, 0.5f), 0.7f};
    const lora::LoRAAdapter b{"b", lora::random_matrix(h1, r2, rng, -0.5f, 0.5f),
                              lora::random_matrix(r2, h2, rng, -0.5f, 0.5f), 1.0f};
    const auto replaced = lora::create_and_replace_emulation(layer, a);
    lora::Layer stacked = layer;
    lora::merge_in_place(layer, a);
    replace = std::max(replace, lora::max_abs_diff(replaced.effective_weight(), layer.W));
    lora::merge_in_place(layer, b);
    // Both adapters as one rank r1+r2 adapter with the scales folded into A.
    lora::Matrix A(h1, r1 + r2);
    lora::Matrix B(r1 + r2, h2);
    for (std::size_t row = 0; row < h1; ++row) {
      for (std::size_t k = 0; k < r1; ++k) A(row, k) = a.A(row, k) * a.scale;
      for (std::size_t k = 0; k < r2; ++k) A(row, r1 + k) = b.A(row, k) * b.scale;
    }
    for (std::size_t col = 0; col < h2; ++col) {
      for (std::size_t k = 0; k < r1; ++k) B(k, col) = a.B(k, col);
      for (std::size_t k = 0; k < r2; ++k) B(r1 + k, col) = b.B(k, col);
    }
    lora::merge_in_place(stacked, lora::LoRAAdapter{"ab", A, B, 1.0f});
    linear = std::max(linear, lora::max_abs_diff(stacked.W, layer.W));
    lora::unmerge(layer, b);
    lora::unmerge(layer, a);
    round_trip = std::max(round_trip, lora::max_abs_diff(layer.W, original));
  }
  return {round_trip <= 1e-5f && replace <= 1e-6f && linear <= 1e-5f,
          "layers=100 round_trip=" + fmt("%.2e", round_trip) + " create_replace=" + fmt("%.2e", replace) +
              " linearity=" + fmt("%.2e", linear)};
}

Outcome determinism() {
  int mismatches = 0;
  std::string first_bad;
  // Simulated runs and traces.
  std::vector<std::string> once;
  for (const auto& r : g_replays) once.push_back(r.fingerprint());
  for (std::size_t i = 0; i < g_replays.size(); ++i) {
    if (g_replays[i].fingerprint() != once[i]) {
      ++mismatches;
      if (first_bad.empty()) first_bad = g_replays[i].label;
    }
  }
  // A full multi-policy scenario through the concurrent runner.
  const auto sc = analysis::scenario_from_json(nlohmann::json::parse(R"json({
    "seed": 3,
    "cluster": {"controlnet_gpus": 3, "base_workers": 2},
    "trace": {"preset": "service_b", "duration_ms": 30000, "n_loras": 300, "workers": 2},
    "policies": ["SerialColocated", "CaaS", "CaaS+AsyncLoRA+opt", "CaaS+PipelineLoRA(4)", "StepSkip(10)"]
  })json"));
  const auto x = analysis::run_scenario(sc, false);
  const auto y = analysis::run_scenario(sc, false);
  bool same = analysis::report_json_string(x.report, false) == analysis::report_json_string(y.report, false);
  for (std::size_t i = 0; i < x.runs.size(); ++i) {
    same = same && sim::event_log_string(x.runs[i].events) == sim::event_log_string(y.runs[i].events);
  }
  if (!same) {
    ++mismatches;
    if (first_bad.empty()) first_bad = "scenario";
  }
  std::string detail = "replayed=" + std::to_string(g_replays.size() + 1) + " mismatches=" + std::to_string(mismatches);
  if (!first_bad.empty()) detail += " first=" + first_bad;
  return {mismatches == 0, detail};
}

Outcome unet_gain_composition() {
  const UnetOptGains g;
  const double composed = g.cuda_graphs * g.geglu * g.groupnorm_silu;
  const bool ok = std::abs(composed - 1.064 * 1.06 * 1.072) <= 1e-12 && std::abs(composed - 1.2) <= 0.02;
  return {ok, "1.064 x 1.06 x 1.072 = " + fmt("%.4f", composed)};
}

}  // namespace

int main() {
  struct Criterion {
    std::string id;
    std::string name;
    double budget_s;
    Outcome (*fn)();
  };
  const std::vector<Criterion> criteria{
      {"1", "ControlNet microbenchmark speedup", 1.0, controlnet_microbenchmark},
      {"2", "Gustafson bound over random profiles", 10.0, gustafson_sweep},
      {"3", "async LoRA patch step", 1.0, lora_patch_step},
      {"4", "serial LoRA fetch and create-replace cost", 1.0, serial_lora_cost},
      {"5", "end-to-end latency and throughput", 5.0, end_to_end},
      {"6", "LRU stack property", 30.0, lru_stack_property},
      {"7", "Zipf calibration", 1.0, zipf_calibration},
      {"8", "trace count distributions", 5.0, trace_fidelity},
      {"9", "merge numerics", 10.0, merge_numerics},
      {"10", "determinism", 30.0, determinism},
      {"10a", "UNet optimization gain composition", 1.0, unet_gain_composition},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.ok = false;
      o.detail += " (over budget " + fmt("%.0f s", c.budget_s) + ")";
    }
    if (!o.ok) ++failed;
    std::printf("%s criterion %-3s %-45s %8.3f s  %s\n", o.ok ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %zu criteria, %d failed\n", failed ? "FAILED" : "OK", criteria.size(), failed);
  return failed ? 1 : 0;
}
