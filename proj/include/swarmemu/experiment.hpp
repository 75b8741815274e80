#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swarmemu/config.hpp"
#include "swarmemu/device.hpp"
#include "swarmemu/metrics.hpp"
#include "swarmemu/workload.hpp"

namespace swarmemu {

/// Completion exactness and data integrity of one run.
struct Integrity {
  bool drained = true;
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t device_posted = 0;
  std::uint64_t cid_violations = 0;
  std::uint64_t verify_failures = 0;
  std::uint64_t status_errors = 0;
  std::uint64_t early_completions = 0;
  std::uint64_t per_qp_mismatch = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

struct RunResult {
  RunConfig config;
  RunReport report;
  DeviceCounters counters;
  ClientStats client;
  Integrity integrity;
  std::uint64_t visit_digest = 0;
  std::vector<std::string> warnings;
  double host_seconds = 0;  // wall time spent running
};

/// Builds device and workload, runs for duration_s (or until total_ops
/// submissions), stops submitting, drains, and summarizes. Throws
/// ConfigError for invalid configurations.
RunResult run_experiment(const RunConfig& cfg);

/// Ablation matrices; every row reuses `base` with the named overrides.
/// frontend: Base, D, D+A, D+C, D+A+C.
std::vector<RunResult> ablation_frontend(const RunConfig& base);
/// timing: {per_request, aggregated} x units.
std::vector<RunResult> ablation_timing(const RunConfig& base, const std::vector<std::uint32_t>& units = {4, 8, 16});
/// skew: global vs local scope with load on one unit only.
std::vector<RunResult> ablation_skew(const RunConfig& base);

/// Applies a named frontend configuration (Base, D, D+A, D+C, D+A+C).
void apply_frontend_variant(DeviceConfig& d, const std::string& variant);

/// Desk-scale starting point for an ablation matrix (frontend, timing, skew).
RunConfig ablation_defaults(const std::string& kind, std::uint64_t seed = 42);

// ---- acceptance checks ----------------------------------------------------

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string measured;
  std::string expected;
  double host_seconds = 0;
};

struct ValidationOptions {
  std::uint64_t seed = 42;
  bool inject_min_delay_fault = false;
  std::vector<int> only;  // empty: all
  /// Called after each check (progress output).
  std::function<void(const CheckResult&)> on_result;
};

/// Desk-scale property checks 1..10; criterion 8 aggregates the integrity
/// of every run performed by the others.
std::vector<CheckResult> run_validation(const ValidationOptions& opts);

/// Copy-engine microbenchmark: copies per second through one group with the
/// given context shape, and issue nanoseconds charged per copy.
struct CopyBenchResult {
  double copies_per_second = 0;
  double issue_ns_per_copy = 0;
  std::uint64_t copies = 0;
  bool data_ok = true;
};
CopyBenchResult copy_engine_bench(std::uint32_t batch_size, std::uint32_t num_desc, Nanos per_copy_cost_ns,
                                  Nanos issue_cost_ns, std::uint32_t pipeline_depth, std::uint64_t copies,
                                  std::uint32_t copy_bytes = 512);

}  // namespace swarmemu
