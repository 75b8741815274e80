#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "swarmemu/clock.hpp"
#include "swarmemu/timing_model.hpp"

namespace swarmemu {

/// Thrown for invalid configuration; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FetchPath { kEngine, kDirect };
enum class FrontendMode { kDistributed, kCentralized };
enum class FetchMode { kCoalesced, kPerEntry };
/// kNone is the ingestion-only mode: workers skip the data copy.
enum class BackendCopy { kEngine, kNone };

struct TimingConfig {
  double t_max_iops = 2.47e6;
  double l_min_us = 50.0;
  std::uint32_t n_instances = 32;
  std::uint32_t unit_bytes = 512;
  UpdateMode mode = UpdateMode::kAggregated;
  ModelScope scope = ModelScope::kGlobal;
  Nanos guard_hold_cost_ns = 0;
  bool drop_min_delay = false;  // fault injection only
};

struct CopyEngineConfig {
  std::uint32_t groups = 0;  // 0: one per service unit
  std::uint32_t wq_depth = 32;
  std::uint32_t pipeline_depth = 8;
  Nanos synthetic_issue_cost_ns = 0;
  Nanos synthetic_per_copy_cost_ns = 0;
  Nanos s_timeout_ns = 5'000;
  Nanos c_timeout_ns = 10'000;
  std::uint32_t batch_size = 16;
  std::uint32_t num_desc = 32;
};

struct DeviceConfig {
  std::uint64_t capacity_blocks = 1u << 17;
  std::uint32_t block_bytes = 512;
  std::uint32_t n_service_units = 4;
  std::uint32_t workers_per_unit = 1;
  std::uint32_t n_queue_pairs = 64;
  std::uint32_t queue_depth = 1024;
  std::uint32_t local_queue_depth = 4096;
  std::uint32_t max_copies_per_iteration = 64;
  FetchPath fetch_path = FetchPath::kEngine;
  FrontendMode frontend_mode = FrontendMode::kDistributed;
  FetchMode fetch_mode = FetchMode::kCoalesced;
  BackendCopy backend_copy = BackendCopy::kEngine;
  Nanos host_transfer_cost_ns = 0;  // per direct CPU transfer
  std::uint64_t pattern_seed = 1;
  TimingConfig timing;
  CopyEngineConfig copy_engine;

  /// Throws ConfigError.
  void validate() const;
  std::uint32_t engine_groups() const { return copy_engine.groups != 0 ? copy_engine.groups : n_service_units; }
  TimingParams timing_params() const;
};

enum class WorkloadKind { kQueueParallel, kWarpCoalesced, kBeamSearch };
enum class LbaDistribution { kUniform, kZipf };

struct BeamConfig {
  std::uint32_t batch = 256;
  std::uint32_t width = 4;
  std::uint32_t degree = 16;
  std::uint64_t n_nodes = 1u << 16;
  std::uint64_t seed = 7;
  /// (width, iterations). Placeholder values, not measured recall targets.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> iterations = {{1, 40}, {2, 24}, {4, 16}, {8, 12}};

  std::uint32_t iterations_for(std::uint32_t w) const;
};

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kWarpCoalesced;
  std::uint32_t n_submitters = 8192;  // logical threads (warp) or submitters (fio)
  std::uint32_t qdepth = 32;          // fio: outstanding per submitter
  std::uint32_t io_bytes = 512;
  std::uint32_t n_queue_pairs = 0;  // 0: all device queue pairs
  std::uint32_t agents = 0;         // submitter agent pool; 0: automatic
  LbaDistribution lba_distribution = LbaDistribution::kUniform;
  double zipf_theta = 0.99;
  std::uint32_t skew_units = 0;  // >0: load only QPs of the first k units
  double offered_iops = 0;       // >0: open-loop arrivals
  double duration_s = 1.0;
  std::uint64_t total_ops = 0;  // >0: stop after this many submissions
  bool verify = true;
  std::uint32_t cqe_poll_batch = 0;  // completions consumed per poll; 0 = all
  std::uint64_t seed = 42;
  BeamConfig beam;

  void validate(const DeviceConfig& device) const;
};

enum class ClockKind { kReal, kVirtual };

struct RunConfig {
  std::string run_id = "run";
  DeviceConfig device;
  WorkloadSpec workload;
  ClockKind clock = ClockKind::kVirtual;
  Nanos virtual_pass_ns = 1'000;
  Nanos virtual_idle_ns = 500;
  double warmup_fraction = 0.1;
  std::string trace_path;  // per-request dump when nonempty

  void validate() const;
};

const char* to_string(FetchPath v);
const char* to_string(FrontendMode v);
const char* to_string(FetchMode v);
const char* to_string(BackendCopy v);
const char* to_string(WorkloadKind v);
const char* to_string(LbaDistribution v);
const char* to_string(ClockKind v);

FetchPath parse_fetch_path(const std::string& s);
FrontendMode parse_frontend_mode(const std::string& s);
FetchMode parse_fetch_mode(const std::string& s);
BackendCopy parse_backend_copy(const std::string& s);
WorkloadKind parse_workload_kind(const std::string& s);
LbaDistribution parse_lba_distribution(const std::string& s);
ClockKind parse_clock_kind(const std::string& s);

nlohmann::json to_json(const RunConfig& cfg);

/// Overlays the keys present in `j` onto `base`. Unknown keys and type
/// mismatches raise ConfigError.
RunConfig merge_json(RunConfig base, const nlohmann::json& j);

RunConfig load_config_file(const std::string& path, RunConfig base = {});

}  // namespace swarmemu
