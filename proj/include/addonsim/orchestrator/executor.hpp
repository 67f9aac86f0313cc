#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "addonsim/core/cluster.hpp"
#include "addonsim/core/error.hpp"
#include "addonsim/core/profile.hpp"
#include "addonsim/core/types.hpp"
#include "addonsim/orchestrator/policy.hpp"
#include "addonsim/sim/engine.hpp"
#include "addonsim/store/catalog.hpp"
#include "addonsim/store/lru_cache.hpp"

namespace addonsim {

// One scheduled activity of a request. `activity` is one of: text_encode,
// lora_fetch, lora_patch, controlnet_fetch, controlnet, encoder_mid, comm,
// decoder, vae_decode.
struct TimelineEntry {
  std::string activity;
  std::string resource_id;
  Millis start = 0.0;
  Millis end = 0.0;
  int step = -1;  // 1-based denoising step, -1 outside the loop
};

using Timeline = std::vector<TimelineEntry>;

struct RequestResult {
  Request request;
  std::string policy;
  std::size_t worker = 0;
  bool ok = false;
  enum class Failure : std::uint8_t { None, NotFound, Invalid, Config } failure = Failure::None;
  std::string error;
  Millis start = 0.0;
  Millis end = 0.0;
  Timeline timeline;
  // total_ms covers service time on the worker, start to end.
  LatencyBreakdown breakdown;
  // Some ControlNets shared a service GPU within this request.
  bool controlnet_queueing = false;

  Millis queue_wait() const { return start - request.arrival; }
  // End-to-end latency, arrival to image.
  Millis latency() const { return end - request.arrival; }
};

struct RunResult {
  std::string policy;
  std::vector<RequestResult> requests;
  std::vector<sim::EventRecord> events;
  store::CacheStats controlnet_cache;
  store::CacheStats lora_cache;
  Millis makespan = 0.0;

  std::size_t completed() const {
    return static_cast<std::size_t>(
        std::count_if(requests.begin(), requests.end(), [](const RequestResult& r) { return r.ok; }));
  }
};

struct RunOptions {
  RequestLimits limits{};
  std::uint64_t watchdog_events = sim::kDefaultWatchdogEvents;
};

namespace detail {

// Builds a catalog holding every id the requests reference. ControlNets get
// the default size; LoRA sizes come from the requests.
inline store::AddonCatalog catalog_from_requests(const std::vector<Request>& requests) {
  store::AddonCatalog cat;
  for (const auto& r : requests) {
    for (const auto& c : r.controlnets) cat.controlnets.emplace(c, store::kDefaultControlNetMib);
    for (const auto& l : r.loras) cat.loras.emplace(l.id, l.size_mib);
  }
  return cat;
}

// Executes one policy over a request sequence on a fresh cluster.
class ServingRun {
 public:
  ServingRun(const std::vector<Request>& requests, const Policy& policy, const ClusterSpec& cluster,
             const LatencyProfile& profile, const store::AddonCatalog& catalog, const RunOptions& options)
      : policy_(policy), cluster_(cluster), profile_(profile), catalog_(catalog), options_(options),
        sim_(options.watchdog_events) {
    validate(profile_);
    validate(cluster_);
    validate(policy_);
    store::validate(catalog_);
    for (std::size_t i = 1; i < requests.size(); ++i) {
      if (requests[i].arrival < requests[i - 1].arrival) {
        throw ValidationError("requests must be sorted by arrival");
      }
    }
    build_cluster();
    states_.reserve(requests.size());
    for (const auto& r : requests) {
      RequestState s;
      s.result.request = r;
      states_.push_back(std::move(s));
    }
  }

  RunResult run() {
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const auto& r = states_[i].result.request;
      sim_.schedule(r.arrival, sim::EventKind::RequestArrival, rid(i), {}, [this, i] { arrive(i); });
    }
    RunResult out;
    out.makespan = sim_.run_until_idle();
    out.policy = policy_.name();
    out.events = sim_.event_log();
    for (auto& w : workers_) {
      out.controlnet_cache += w.cn_cache.stats();
      out.lora_cache += w.lora_cache.stats();
    }
    for (auto& g : cn_gpus_) out.controlnet_cache += g.cache.stats();
    out.requests.reserve(states_.size());
    for (auto& s : states_) out.requests.push_back(std::move(s.result));
    return out;
  }

 private:
  struct Worker {
    sim::Resource* gpu = nullptr;
    std::vector<sim::Resource*> loaders;
    store::LruCache cn_cache;
    store::LruCache lora_cache;
    std::deque<std::size_t> queue;
    bool busy = false;
  };

  struct ServiceGpu {
    sim::Resource* gpu = nullptr;
    store::LruCache cache;
  };

  struct LoraLoad {
    std::vector<Millis> group_complete;  // one entry per group
    std::size_t patched_groups = 0;
    std::optional<int> effective_from;   // first step running with the full LoRA
  };

  // Per-step record of one ControlNet branch for latency attribution.
  struct Branch {
    Millis fetch_end = 0.0;
    Millis compute_end = 0.0;
    Millis arrival = 0.0;
  };

  struct RequestState {
    RequestResult result;
    Policy policy;
    StepStages stages;
    int steps_to_run = 0;
    int step = 0;  // steps completed
    std::vector<LoraLoad> loras;
    std::vector<std::size_t> service_gpu;  // chosen GPU per ControlNet
    Millis step_start = 0.0;
    Millis encoder_end = 0.0;
    std::vector<Branch> branches;
  };

  static std::int64_t rid(std::size_t i) { return static_cast<std::int64_t>(i); }

  void build_cluster() {
    for (int w = 0; w < cluster_.base_workers; ++w) {
      Worker wk;
      const auto name = "worker" + std::to_string(w);
      wk.gpu = &sim_.add_resource(name, sim::ResourceKind::GpuCompute);
      for (int c = 0; c < cluster_.loader_channels; ++c) {
        wk.loaders.push_back(&sim_.add_resource(name + "/loader" + std::to_string(c), sim::ResourceKind::LoaderChannel));
      }
      wk.cn_cache = store::LruCache(cluster_.gpu_cache_mib);
      wk.lora_cache = store::LruCache(cluster_.host_cache_mib);
      workers_.push_back(std::move(wk));
    }
    for (int g = 0; g < cluster_.controlnet_gpus; ++g) {
      ServiceGpu sg;
      sg.gpu = &sim_.add_resource("cn" + std::to_string(g), sim::ResourceKind::GpuCompute);
      sg.cache = store::LruCache(cluster_.gpu_cache_mib);
      cn_gpus_.push_back(std::move(sg));
    }
    // Pinned replicas are long-running services: place round-robin, warm.
    std::size_t next = 0;
    for (const auto& [id, replicas] : cluster_.controlnet_replicas) {
      const auto size = catalog_.controlnets.count(id) ? catalog_.controlnets.at(id) : store::kDefaultControlNetMib;
      for (int r = 0; r < replicas; ++r) {
        cn_gpus_[next % cn_gpus_.size()].cache.preload(id, size);
        ++next;
      }
    }
  }

  void fail(std::size_t i, RequestResult::Failure kind, const std::string& why) {
    auto& res = states_[i].result;
    res.ok = false;
    res.failure = kind;
    res.error = why;
  }

  void arrive(std::size_t i) {
    auto& s = states_[i];
    auto& res = s.result;
    res.worker = i % workers_.size();
    try {
      s.policy = res.request.policy_override ? parse_policy(*res.request.policy_override) : policy_;
      res.policy = s.policy.name();
      validate(res.request, options_.limits);
      validate(s.policy, res.request.steps);
      catalog_.check(res.request);
      if (s.policy.uses_controlnet_service() && !res.request.controlnets.empty() && cn_gpus_.empty()) {
        throw ConfigError(s.policy.name() + " needs cluster.controlnet_gpus >= 1");
      }
    } catch (const NotFoundError& e) {
      fail(i, RequestResult::Failure::NotFound, e.what());
      return;
    } catch (const ConfigError& e) {
      fail(i, RequestResult::Failure::Config, e.what());
      return;
    } catch (const ValidationError& e) {
      fail(i, RequestResult::Failure::Invalid, e.what());
      return;
    }
    s.stages = step_stages(profile_, s.policy.unet_optimized);
    s.steps_to_run = res.request.steps - s.policy.skip_steps;
    const auto mode = s.policy.lora_mode();
    if (mode == LoraMode::Async || mode == LoraMode::Pipeline) start_async_fetches(i);
    auto& w = workers_[res.worker];
    w.queue.push_back(i);
    if (!w.busy) start_next(res.worker);
  }

  const StorageTier& lora_tier(Worker& w, const LoraRef& l) {
    const bool hit = w.lora_cache.touch(l.id, l.size_mib);
    return cluster_.tier(hit ? cluster_.lora_cached_tier : cluster_.lora_fetch_tier);
  }

  sim::Resource& earliest_loader(Worker& w) {
    return **std::min_element(w.loaders.begin(), w.loaders.end(),
                              [](const sim::Resource* a, const sim::Resource* b) { return a->busy_until() < b->busy_until(); });
  }

  void add_entry(std::size_t i, std::string activity, const sim::Activity& a, const std::string& resource, int step = -1) {
    states_[i].result.timeline.push_back(TimelineEntry{std::move(activity), resource, a.start, a.end, step});
  }

  // Fetches start at arrival on the worker's loader channels and overlap denoising.
  void start_async_fetches(std::size_t i) {
    auto& s = states_[i];
    auto& w = workers_[s.result.worker];
    const int groups = s.policy.lora_mode() == LoraMode::Pipeline ? s.policy.groups : 1;
    for (const auto& l : s.result.request.loras) {
      const auto& tier = lora_tier(w, l);
      auto& ch = earliest_loader(w);
      const auto& act = sim_.acquire(ch, transfer_ms(l.size_mib, tier), rid(i), "lora_fetch:" + l.id);
      add_entry(i, "lora_fetch", act, ch.id());
      LoraLoad load;
      const Millis body = act.end - act.start - tier.latency_ms;
      for (int m = 1; m <= groups; ++m) {
        load.group_complete.push_back(m == groups ? act.end : act.start + tier.latency_ms + body * m / groups);
      }
      s.loras.push_back(std::move(load));
      sim_.schedule(act.end, sim::EventKind::FetchComplete, rid(i), ch.id(), {});
    }
  }

  void start_next(std::size_t wi) {
    auto& w = workers_[wi];
    if (w.queue.empty()) {
      w.busy = false;
      return;
    }
    w.busy = true;
    const std::size_t i = w.queue.front();
    w.queue.pop_front();
    auto& s = states_[i];
    s.result.start = sim_.now();
    const auto& act = sim_.acquire(*w.gpu, profile_.text_encoder_ms, rid(i), "text_encode");
    add_entry(i, "text_encode", act, w.gpu->id());
    s.result.breakdown[Stage::TextEncode] += act.end - act.start;
    sim_.schedule(act.start, sim::EventKind::StageStart, rid(i), w.gpu->id(), {});
    sim_.schedule(act.end, sim::EventKind::StageEnd, rid(i), w.gpu->id(), [this, i] { after_text(i); });
  }

  // Blocking LoRA path: sequential fetch, then create-and-replace patching.
  void after_text(std::size_t i) {
    auto& s = states_[i];
    if (s.policy.lora_mode() != LoraMode::Blocking || s.result.request.loras.empty()) {
      boundary(i);
      return;
    }
    auto& w = workers_[s.result.worker];
    auto& ch = *w.loaders.front();
    Millis done = sim_.now();
    for (const auto& l : s.result.request.loras) {
      const auto& tier = lora_tier(w, l);
      const auto& act = sim_.acquire(ch, transfer_ms(l.size_mib, tier), rid(i), "lora_fetch:" + l.id);
      add_entry(i, "lora_fetch", act, ch.id());
      done = act.end;
    }
    s.result.breakdown[Stage::LoraLoadExposed] += done - sim_.now();
    sim_.schedule(done, sim::EventKind::FetchComplete, rid(i), ch.id(), [this, i] {
      auto& st = states_[i];
      auto& wk = workers_[st.result.worker];
      Millis patch = 0.0;
      for (const auto& l : st.result.request.loras) patch += create_replace_patch_ms(profile_, l.size_mib);
      const auto& act = sim_.acquire(*wk.gpu, patch, rid(i), "lora_patch");
      add_entry(i, "lora_patch", act, wk.gpu->id());
      st.result.breakdown[Stage::LoraPatch] += act.end - act.start;
      st.result.breakdown.first_patched_step = 1;
      sim_.schedule(act.end, sim::EventKind::StageEnd, rid(i), wk.gpu->id(), [this, i] { boundary(i); });
    });
  }

  Millis group_patch_ms(const Policy& p) const {
    if (p.lora_mode() == LoraMode::Pipeline) {
      return (profile_.patch_inplace_ms + (p.groups - 1) * profile_.patch_group_overhead_ms) / p.groups;
    }
    return profile_.patch_inplace_ms;
  }

  // Step boundary `s.step`: patch every LoRA group that has finished loading.
  void boundary(std::size_t i) {
    auto& s = states_[i];
    auto& w = workers_[s.result.worker];
    Millis patch = 0.0;
    const Millis now = sim_.now();
    for (auto& l : s.loras) {
      if (l.patched_groups < l.group_complete.size() && l.group_complete[l.patched_groups] <= now) {
        ++l.patched_groups;
        patch += group_patch_ms(s.policy);
        if (l.patched_groups == l.group_complete.size()) l.effective_from = s.step + 1;
      }
    }
    if (patch > 0.0) {
      const auto& act = sim_.acquire(*w.gpu, patch, rid(i), "lora_patch");
      add_entry(i, "lora_patch", act, w.gpu->id(), s.step);
      s.result.breakdown[Stage::LoraPatch] += act.end - act.start;
      sim_.schedule(act.start, sim::EventKind::PatchBoundary, rid(i), w.gpu->id(), {});
      sim_.schedule(act.end, sim::EventKind::StageEnd, rid(i), w.gpu->id(), [this, i] { run_step(i); });
    } else {
      run_step(i);
    }
  }

  void run_step(std::size_t i) {
    auto& s = states_[i];
    if (s.policy.uses_controlnet_service() && !s.result.request.controlnets.empty()) {
      run_service_step(i);
    } else {
      run_colocated_step(i);
    }
  }

  // ControlNets (if any) then UNet, all on the base GPU.
  void run_colocated_step(std::size_t i) {
    auto& s = states_[i];
    auto& w = workers_[s.result.worker];
    auto& bd = s.result.breakdown;
    const int step = s.step + 1;
    const auto& gpu_id = w.gpu->id();
    sim_.schedule(sim_.now(), sim::EventKind::StageStart, rid(i), gpu_id, {});
    if (s.policy.runs_controlnets()) {
      for (const auto& cn : s.result.request.controlnets) {
        if (s.step == 0) {
          const auto size = catalog_.controlnet_size(cn);
          const auto hit = w.cn_cache.access(cn, size, cluster_.tier(cluster_.controlnet_fetch_tier));
          if (!hit.hit) {
            const auto& f = sim_.acquire(*w.gpu, hit.fetch_ms, rid(i), "controlnet_fetch:" + cn);
            add_entry(i, "controlnet_fetch", f, gpu_id, step);
            bd[Stage::CacheFetch] += f.end - f.start;
          }
        }
        const auto& c = sim_.acquire(*w.gpu, s.stages.controlnet, rid(i), "controlnet:" + cn);
        add_entry(i, "controlnet", c, gpu_id, step);
        bd[Stage::ControlnetWait] += c.end - c.start;
      }
    }
    const auto& enc = sim_.acquire(*w.gpu, s.stages.encoder_mid, rid(i), "encoder_mid");
    add_entry(i, "encoder_mid", enc, gpu_id, step);
    const auto& dec = sim_.acquire(*w.gpu, s.stages.decoder, rid(i), "decoder");
    add_entry(i, "decoder", dec, gpu_id, step);
    bd[Stage::DenoiseCompute] += (enc.end - enc.start) + (dec.end - dec.start);
    sim_.schedule(dec.end, sim::EventKind::StageEnd, rid(i), gpu_id, [this, i] { step_done(i); });
  }

  std::size_t pick_service_gpu(const ControlNetId& cn) const {
    std::optional<std::size_t> best;
    auto better = [&](std::size_t g) {
      return !best || cn_gpus_[g].gpu->busy_until() < cn_gpus_[*best].gpu->busy_until();
    };
    for (std::size_t g = 0; g < cn_gpus_.size(); ++g) {
      if (cn_gpus_[g].cache.contains(cn) && better(g)) best = g;
    }
    if (best) return *best;
    for (std::size_t g = 0; g < cn_gpus_.size(); ++g) {
      if (better(g)) best = g;
    }
    return *best;
  }

  // Encoder runs on the base GPU while each ControlNet runs on its service GPU;
  // the decoder starts once the encoder and every ControlNet output are done.
  void run_service_step(std::size_t i) {
    auto& s = states_[i];
    auto& w = workers_[s.result.worker];
    const int step = s.step + 1;
    const auto& req = s.result.request;
    s.step_start = sim_.now();
    sim_.schedule(s.step_start, sim::EventKind::StageStart, rid(i), w.gpu->id(), {});
    const auto& enc = sim_.acquire(*w.gpu, s.stages.encoder_mid, rid(i), "encoder_mid");
    add_entry(i, "encoder_mid", enc, w.gpu->id(), step);
    s.result.breakdown[Stage::DenoiseCompute] += enc.end - enc.start;
    s.encoder_end = enc.end;

    if (s.step == 0) s.service_gpu.clear();
    s.branches.clear();
    Millis sync = enc.end;
    for (std::size_t c = 0; c < req.controlnets.size(); ++c) {
      const auto& cn = req.controlnets[c];
      // Replica choice happens once per request, seeing earlier branches' reservations.
      if (s.step == 0) s.service_gpu.push_back(pick_service_gpu(cn));
      auto& sg = cn_gpus_[s.service_gpu[c]];
      Branch b{s.step_start, 0.0, 0.0};
      if (s.step == 0) {
        const auto hit = sg.cache.access(cn, catalog_.controlnet_size(cn), cluster_.tier(cluster_.controlnet_fetch_tier));
        if (!hit.hit) {
          const auto& f = sim_.acquire(*sg.gpu, hit.fetch_ms, rid(i), "controlnet_fetch:" + cn);
          add_entry(i, "controlnet_fetch", f, sg.gpu->id(), step);
          s.result.breakdown.gpu_ms_consumed[sg.gpu->id()] += f.end - f.start;
          b.fetch_end = f.end;
        }
      }
      const auto& act = sim_.acquire(*sg.gpu, s.stages.controlnet, rid(i), "controlnet:" + cn);
      add_entry(i, "controlnet", act, sg.gpu->id(), step);
      b.compute_end = act.end;
      b.arrival = act.end + s.stages.comm;
      s.result.timeline.push_back(
          TimelineEntry{"comm", "link:" + sg.gpu->id() + "->" + w.gpu->id(), act.end, b.arrival, step});
      s.result.breakdown.gpu_ms_consumed[sg.gpu->id()] += act.end - act.start;
      sync = std::max(sync, b.arrival);
      s.branches.push_back(b);
    }
    if (s.step == 0) {
      auto sorted = s.service_gpu;
      std::sort(sorted.begin(), sorted.end());
      s.result.controlnet_queueing = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    }
    sim_.schedule(sync, sim::EventKind::SyncAcquire, rid(i), w.gpu->id(), [this, i] { decode_after_sync(i); });
  }

  static Millis overlap(Millis a0, Millis a1, Millis b0, Millis b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  }

  void decode_after_sync(std::size_t i) {
    auto& s = states_[i];
    auto& w = workers_[s.result.worker];
    auto& bd = s.result.breakdown;
    const Millis sync = sim_.now();
    if (sync > s.encoder_end) {
      // Attribute the stall to the phases of the latest-arriving branch.
      const auto& b = *std::max_element(s.branches.begin(), s.branches.end(),
                                        [](const Branch& x, const Branch& y) { return x.arrival < y.arrival; });
      const Millis fetch = overlap(s.encoder_end, sync, s.step_start, b.fetch_end);
      const Millis comm = overlap(s.encoder_end, sync, b.compute_end, b.arrival);
      bd[Stage::CacheFetch] += fetch;
      bd[Stage::Comm] += comm;
      bd[Stage::ControlnetWait] += (sync - s.encoder_end) - fetch - comm;
    }
    const auto& dec = sim_.acquire(*w.gpu, s.stages.decoder, rid(i), "decoder");
    add_entry(i, "decoder", dec, w.gpu->id(), s.step + 1);
    bd[Stage::DenoiseCompute] += dec.end - dec.start;
    sim_.schedule(dec.end, sim::EventKind::StageEnd, rid(i), w.gpu->id(), [this, i] { step_done(i); });
  }

  void step_done(std::size_t i) {
    auto& s = states_[i];
    ++s.step;
    if (s.step < s.steps_to_run) {
      boundary(i);
      return;
    }
    auto& w = workers_[s.result.worker];
    const auto& act = sim_.acquire(*w.gpu, profile_.vae_decode_ms, rid(i), "vae_decode");
    add_entry(i, "vae_decode", act, w.gpu->id());
    s.result.breakdown[Stage::VaeDecode] += act.end - act.start;
    sim_.schedule(act.start, sim::EventKind::StageStart, rid(i), w.gpu->id(), {});
    sim_.schedule(act.end, sim::EventKind::StageEnd, rid(i), w.gpu->id(), [this, i] { complete(i); });
  }

  void complete(std::size_t i) {
    auto& s = states_[i];
    auto& res = s.result;
    res.ok = true;
    res.end = sim_.now();
    res.breakdown.total_ms = res.end - res.start;
    res.breakdown.gpu_ms_consumed[workers_[res.worker].gpu->id()] += res.breakdown.total_ms;
    const auto mode = s.policy.lora_mode();
    if ((mode == LoraMode::Async || mode == LoraMode::Pipeline) && !s.loras.empty()) {
      int latest = 1;
      for (const auto& l : s.loras) latest = std::max(latest, l.effective_from.value_or(s.steps_to_run + 1));
      res.breakdown.first_patched_step = latest;
    }
    start_next(res.worker);
  }

  Policy policy_;
  ClusterSpec cluster_;
  LatencyProfile profile_;
  const store::AddonCatalog& catalog_;
  RunOptions options_;
  sim::Simulator sim_;
  std::vector<Worker> workers_;
  std::vector<ServiceGpu> cn_gpus_;
  std::vector<RequestState> states_;
};

}  // namespace detail

// Runs every request under `policy` (per-request overrides honored) on a
// fresh cluster. Workers are assigned round-robin in arrival order.
inline RunResult simulate(const std::vector<Request>& requests, const Policy& policy, const ClusterSpec& cluster,
                          const LatencyProfile& profile, const store::AddonCatalog& catalog,
                          const RunOptions& options = {}) {
  detail::ServingRun run(requests, policy, cluster, profile, catalog, options);
  return run.run();
}

inline RunResult simulate(const std::vector<Request>& requests, const Policy& policy, const ClusterSpec& cluster,
                          const LatencyProfile& profile) {
  const auto catalog = detail::catalog_from_requests(requests);
  return simulate(requests, policy, cluster, profile, catalog);
}

struct Execution {
  Timeline timeline;
  LatencyBreakdown breakdown;
};

// Runs a single request alone on the cluster. Unknown add-on ids raise NotFoundError.
inline Execution execute(const Request& request, const Policy& policy, const ClusterSpec& cluster,
                         const LatencyProfile& profile, const store::AddonCatalog& catalog) {
  auto run = simulate({request}, policy, cluster, profile, catalog);
  auto& r = run.requests.front();
  switch (r.failure) {
    case RequestResult::Failure::None: break;
    case RequestResult::Failure::NotFound: throw NotFoundError(r.error);
    case RequestResult::Failure::Config: throw ConfigError(r.error);
    case RequestResult::Failure::Invalid: throw ValidationError(r.error);
  }
  return Execution{std::move(r.timeline), std::move(r.breakdown)};
}

inline Execution execute(const Request& request, const Policy& policy, const ClusterSpec& cluster,
                         const LatencyProfile& profile) {
  return execute(request, policy, cluster, profile, detail::catalog_from_requests({request}));
}

}  // namespace addonsim
