// Command-line driver: bench, ablation and validate subcommands.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "swarmemu/config.hpp"
#include "swarmemu/experiment.hpp"
#include "swarmemu/metrics.hpp"

namespace fs = std::filesystem;
using namespace swarmemu;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitVerify = 2;
constexpr int kExitTolerance = 3;

/// Flag values; unset optionals leave the file/default value alone.
struct Flags {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<double> tmax_iops, lmin_us, duration, offered_iops;
  std::optional<std::uint32_t> units, threads, qdepth, qps, batch, width, instances, skew_units;
  std::optional<std::uint64_t> seed, total_ops;
  std::optional<std::string> clock, mode, scope, frontend, trace;
  std::vector<double> sweep_tmax;
  bool no_verify = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_path, "JSON config file (default: $SWARM_EMU_CONFIG)");
  app->add_option("--out", f.out_dir, "output directory for CSV and JSON reports");
  app->add_option("--tmax-iops", f.tmax_iops, "target maximum IOPS");
  app->add_option("--lmin-us", f.lmin_us, "target minimum latency in microseconds");
  app->add_option("--instances", f.instances, "timing model instances");
  app->add_option("--units", f.units, "service units");
  app->add_option("--qps", f.qps, "queue pairs");
  app->add_option("--threads", f.threads, "logical submitters");
  app->add_option("--qdepth", f.qdepth, "per-submitter queue depth");
  app->add_option("--offered-iops", f.offered_iops, "open-loop offered load (0 = closed loop)");
  app->add_option("--duration", f.duration, "measured duration in seconds");
  app->add_option("--total-ops", f.total_ops, "stop after this many submissions");
  app->add_option("--skew-units", f.skew_units, "confine load to the queue pairs of this many units");
  app->add_option("--seed", f.seed, "workload seed");
  app->add_option("--clock", f.clock, "virtual or real");
  app->add_option("--mode", f.mode, "timing update mode: aggregated or per_request");
  app->add_option("--scope", f.scope, "timing model scope: global or local");
  app->add_option("--frontend", f.frontend, "frontend variant: Base, D, D+A, D+C, D+A+C");
  app->add_option("--trace", f.trace, "write a per-request trace to this file");
  app->add_flag("--no-verify", f.no_verify, "skip read-data verification");
}

RunConfig effective_config(const Flags& f, RunConfig cfg) {
  std::string path = f.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("SWARM_EMU_CONFIG")) path = env;
  }
  if (!path.empty()) cfg = load_config_file(path, cfg);
  auto& t = cfg.device.timing;
  auto& w = cfg.workload;
  if (f.tmax_iops) t.t_max_iops = *f.tmax_iops;
  if (f.lmin_us) t.l_min_us = *f.lmin_us;
  if (f.instances) t.n_instances = *f.instances;
  if (f.mode) t.mode = parse_update_mode(*f.mode);
  if (f.scope) t.scope = parse_model_scope(*f.scope);
  if (f.units) cfg.device.n_service_units = *f.units;
  if (f.qps) cfg.device.n_queue_pairs = *f.qps;
  if (f.frontend) apply_frontend_variant(cfg.device, *f.frontend);
  if (f.threads) w.n_submitters = *f.threads;
  if (f.qdepth) w.qdepth = *f.qdepth;
  if (f.offered_iops) w.offered_iops = *f.offered_iops;
  if (f.duration) w.duration_s = *f.duration;
  if (f.total_ops) w.total_ops = *f.total_ops;
  if (f.skew_units) w.skew_units = *f.skew_units;
  if (f.seed) w.seed = *f.seed;
  if (f.batch) w.beam.batch = *f.batch;
  if (f.width) w.beam.width = *f.width;
  if (f.no_verify) w.verify = false;
  if (f.clock) cfg.clock = parse_clock_kind(*f.clock);
  if (f.trace) cfg.trace_path = *f.trace;
  cfg.validate();
  return cfg;
}

void print_summary(const RunResult& r) {
  const auto& p = r.report;
  std::cout << p.run_id << ": " << p.workload << " iops=" << static_cast<std::uint64_t>(p.iops)
            << " target_mean_us=" << p.target.mean_us << " proc_mean_us=" << p.proc.mean_us
            << " e2e_mean_us=" << p.e2e.mean_us << " e2e_p99_us=" << p.e2e.p99_us;
  if (p.workload == "beam_search") std::cout << " qps=" << p.qps;
  std::cout << " integrity=" << (r.integrity.ok() ? "ok" : "FAIL") << '\n';
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& e : r.integrity.problems) std::cerr << "integrity: " << e << '\n';
}

int emit(const std::vector<RunResult>& results, const std::string& out_dir, const std::string& stem) {
  fs::create_directories(out_dir);
  std::vector<RunReport> reports;
  nlohmann::json all = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : results) {
    print_summary(r);
    reports.push_back(r.report);
    nlohmann::json j = to_json(r.report);
    j["integrity_ok"] = r.integrity.ok();
    j["integrity_problems"] = r.integrity.problems;
    j["warnings"] = r.warnings;
    all.push_back(std::move(j));
    ok = ok && r.integrity.ok();
  }
  const fs::path csv = fs::path(out_dir) / (stem + ".csv");
  const fs::path json = fs::path(out_dir) / (stem + ".json");
  export_csv(reports, csv.string());
  std::ofstream(json) << all.dump(2) << '\n';
  std::cout << "wrote " << csv.string() << " and " << json.string() << '\n';
  return ok ? kExitOk : kExitVerify;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw ConfigError("empty --sweep-tmax list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NVMe device emulator with a configurable performance target"};
  app.require_subcommand(1);

  Flags f;
  std::string bench_kind, ablation_kind, sweep;
  std::string fault;
  std::uint64_t validate_seed = 42;
  std::vector<int> only;

  auto* bench = app.add_subcommand("bench", "run one workload (or a t_max sweep)");
  bench->add_option("kind", bench_kind, "fio, warp or beam")->required()->check(CLI::IsMember({"fio", "warp", "beam"}));
  add_common(bench, f);
  bench->add_option("--batch", f.batch, "beam search query batch size");
  bench->add_option("--width", f.width, "beam width");
  bench->add_option("--sweep-tmax", sweep, "comma-separated t_max values; one run each");

  auto* ablation = app.add_subcommand("ablation", "run a fixed configuration matrix");
  ablation->add_option("kind", ablation_kind, "frontend, timing or skew")
      ->required()
      ->check(CLI::IsMember({"frontend", "timing", "skew"}));
  add_common(ablation, f);

  auto* validate = app.add_subcommand("validate", "run the acceptance checks");
  validate->add_option("--seed", validate_seed, "seed for every run");
  validate->add_option("--inject-fault", fault, "deliberately break the emulator (min_delay)")
      ->check(CLI::IsMember({"min_delay"}));
  validate->add_option("--only", only, "run only these check ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*bench) {
      RunConfig base;
      base.workload.kind = parse_workload_kind(bench_kind == "fio"    ? "queue_parallel"
                                               : bench_kind == "warp" ? "warp_coalesced"
                                                                      : "beam_search");
      // A single fio submitter unless told otherwise.
      if (bench_kind == "fio") base.workload.n_submitters = 1;
      RunConfig cfg = effective_config(f, base);
      if (cfg.run_id.empty() || cfg.run_id == RunConfig{}.run_id) cfg.run_id = "bench-" + bench_kind;
      std::vector<RunResult> results;
      if (!sweep.empty()) {
        for (double t : parse_list(sweep)) {
          RunConfig c = cfg;
          c.device.timing.t_max_iops = t;
          c.run_id = cfg.run_id + ":tmax=" + std::to_string(static_cast<std::uint64_t>(t));
          c.validate();
          results.push_back(run_experiment(c));
        }
      } else {
        results.push_back(run_experiment(cfg));
      }
      return emit(results, f.out_dir, cfg.run_id);
    }
    if (*ablation) {
      RunConfig cfg = effective_config(f, ablation_defaults(ablation_kind, f.seed.value_or(42)));
      std::vector<RunResult> results;
      if (ablation_kind == "frontend") results = ablation_frontend(cfg);
      if (ablation_kind == "timing") results = ablation_timing(cfg, {4, 8, 16});
      if (ablation_kind == "skew") results = ablation_skew(cfg);
      return emit(results, f.out_dir, cfg.run_id);
    }
    if (*validate) {
      ValidationOptions opts;
      opts.seed = validate_seed;
      opts.inject_min_delay_fault = fault == "min_delay";
      opts.only = only;
      opts.on_result = [](const CheckResult& c) {
        std::cout << (c.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << c.measured
                  << " (expected " << c.expected << ") " << c.host_seconds << "s" << std::endl;
      };
      const auto results = run_validation(opts);
      bool ok = true;
      for (const auto& c : results) ok = ok && c.pass;
      std::cout << (ok ? "all checks passed" : "tolerance violation") << '\n';
      return ok ? kExitOk : kExitTolerance;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
