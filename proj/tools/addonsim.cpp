#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "addonsim/analysis/config.hpp"
#include "addonsim/analysis/report.hpp"
#include "addonsim/analysis/runner.hpp"
#include "addonsim/lora/merge.hpp"
#include "addonsim/workload/trace.hpp"
#include "addonsim/workload/trace_csv.hpp"
#include "addonsim/workload/zipf.hpp"

namespace an = addonsim::analysis;
namespace wl = addonsim::workload;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string format;
};

an::Scenario load(const std::string& path, const Globals& g) {
  auto sc = an::load_scenario(path, g.seed);
  if (!g.out_dir.empty()) sc.outputs.dir = g.out_dir;
  if (!g.format.empty()) sc.outputs.formats = {g.format};
  return sc;
}

void print_report(const an::Report& r, const std::string& format) {
  if (format == "csv") {
    an::write_report_csv(std::cout, r);
    return;
  }
  std::cout << an::report_json_string(r);
}

int cmd_run(const std::string& scenario, const Globals& g) {
  const auto sc = load(scenario, g);
  const auto res = an::run_scenario(sc);
  print_report(res.report, g.format);
  return an::kExitOk;
}

int cmd_gen_trace(const std::string& spec_path, const std::string& out, const Globals& g) {
  auto j = an::load_json_file(spec_path);
  if (j.is_object() && g.seed) j["seed"] = *g.seed;
  const auto spec = an::trace_spec_from_json(j);
  const auto trace = wl::generate(spec, an::fnv1a(j.dump()));
  wl::export_trace(out, trace);
  std::cerr << "wrote " << trace.requests.size() << " requests to " << out << '\n';
  return an::kExitOk;
}

int cmd_calibrate(std::size_t items, double top, double mass, const Globals& g) {
  const double a = wl::calibrate_zipf(items, top, mass);
  const auto k = wl::top_count(items, top);
  const double achieved = wl::zipf_top_mass(items, k, a);
  if (g.format == "csv") {
    std::cout << "items,top_fraction,top_count,target_mass,exponent,achieved_mass\n"
              << items << ',' << wl::csv::format_double(top) << ',' << k << ',' << wl::csv::format_double(mass) << ','
              << wl::csv::format_double(a) << ',' << wl::csv::format_double(achieved) << '\n';
  } else {
    nlohmann::ordered_json out{{"items", items},     {"top_fraction", top}, {"top_count", k},
                               {"target_mass", mass}, {"exponent", a},      {"achieved_mass", achieved}};
    std::cout << out.dump(2) << '\n';
  }
  return an::kExitOk;
}

int cmd_sweep(const std::string& scenario, const std::vector<double>& caps, const Globals& g) {
  const auto sc = load(scenario, g);
  const auto sweep = an::sweep_cache(sc, caps);
  if (g.format == "json") {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [name, curve] : {std::pair{"controlnet", &sweep.controlnet}, std::pair{"lora", &sweep.lora}}) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& p : *curve) {
        arr.push_back({{"capacity_mib", p.capacity_mib}, {"hit_rate", p.hit_rate}, {"accesses", p.stats.accesses},
                       {"hits", p.stats.hits}, {"evictions", p.stats.evictions}});
      }
      out[name] = arr;
    }
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "# controlnet\n";
    an::write_curve_csv(std::cout, sweep.controlnet);
    std::cout << "# lora\n";
    an::write_curve_csv(std::cout, sweep.lora);
  }
  return an::kExitOk;
}

int cmd_bench(std::size_t h1, std::size_t h2, std::size_t rank, int repeats, const Globals& g) {
  const auto b = addonsim::lora::bench_merge(h1, h2, rank, repeats, g.seed.value_or(7));
  if (g.format == "csv") {
    std::cout << "h1,h2,rank,inplace_ms,create_replace_ms,inplace_bytes,create_replace_bytes\n"
              << b.h1 << ',' << b.h2 << ',' << b.rank << ',' << b.inplace_ms << ',' << b.create_replace_ms << ','
              << b.inplace_bytes << ',' << b.create_replace_bytes << '\n';
  } else {
    nlohmann::ordered_json out{{"h1", b.h1},
                               {"h2", b.h2},
                               {"rank", b.rank},
                               {"inplace_ms", b.inplace_ms},
                               {"create_replace_ms", b.create_replace_ms},
                               {"inplace_bytes", b.inplace_bytes},
                               {"create_replace_bytes", b.create_replace_bytes}};
    std::cout << out.dump(2) << '\n';
  }
  return an::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"addonsim: add-on serving simulator for diffusion pipelines"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario or trace seed");
  app.add_option("--out-dir", g.out_dir, "Directory for report files");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));

  std::string scenario;
  auto* run = app.add_subcommand("run", "Run every policy of a scenario and write the report");
  run->add_option("scenario", scenario, "Scenario JSON file")->required();
  run->fallthrough();

  std::string spec_path;
  std::string out_csv;
  auto* gen = app.add_subcommand("gen-trace", "Generate a request trace from a trace spec");
  gen->add_option("spec", spec_path, "Trace spec JSON file")->required();
  gen->add_option("-o,--output", out_csv, "Output CSV path")->required();
  gen->fallthrough();

  std::size_t items = 0;
  double top = 0.0;
  double mass = 0.0;
  auto* cal = app.add_subcommand("calibrate-zipf", "Find the Zipf exponent for a head-mass target");
  cal->add_option("--items", items, "Catalog size")->required();
  cal->add_option("--top", top, "Head fraction of the catalog")->required();
  cal->add_option("--mass", mass, "Target probability mass of the head")->required();
  cal->fallthrough();

  std::vector<double> caps;
  auto* sweep = app.add_subcommand("sweep-cache", "Hit-rate curves of the scenario trace");
  sweep->add_option("scenario", scenario, "Scenario JSON file")->required();
  sweep->add_option("--capacities", caps, "Cache capacities in MiB");
  sweep->fallthrough();

  std::size_t h1 = 0;
  std::size_t h2 = 0;
  std::size_t rank = 0;
  int repeats = 3;
  auto* bench = app.add_subcommand("bench-merge", "Time in-place merge against create-and-replace");
  bench->add_option("--h1", h1, "Rows of the weight")->required();
  bench->add_option("--h2", h2, "Columns of the weight")->required();
  bench->add_option("--rank", rank, "Adapter rank")->required();
  bench->add_option("--repeats", repeats, "Timing repetitions");
  bench->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : an::kExitConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*run) return cmd_run(scenario, g);
    if (*gen) return cmd_gen_trace(spec_path, out_csv, g);
    if (*cal) return cmd_calibrate(items, top, mass, g);
    if (*sweep) return cmd_sweep(scenario, caps, g);
    if (*bench) return cmd_bench(h1, h2, rank, repeats, g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return an::exit_code_for(e);
  }
  return an::kExitOk;
}
