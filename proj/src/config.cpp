#include "swarmemu/config.hpp"

#include <bit>
#include <fstream>
#include <set>

namespace swarmemu {

namespace {

using nlohmann::json;

template <typename E>
struct EnumNames;

#define SWARMEMU_ENUM_NAMES(E, ...)                                             \
  template <>                                                                  \
  struct EnumNames<E> {                                                        \
    static constexpr std::pair<E, const char*> table[] = {__VA_ARGS__};        \
  };

SWARMEMU_ENUM_NAMES(FetchPath, {FetchPath::kEngine, "engine"}, {FetchPath::kDirect, "direct"})
SWARMEMU_ENUM_NAMES(FrontendMode, {FrontendMode::kDistributed, "distributed"},
                    {FrontendMode::kCentralized, "centralized"})
SWARMEMU_ENUM_NAMES(FetchMode, {FetchMode::kCoalesced, "coalesced"}, {FetchMode::kPerEntry, "per_entry"})
SWARMEMU_ENUM_NAMES(BackendCopy, {BackendCopy::kEngine, "engine"}, {BackendCopy::kNone, "none"})
SWARMEMU_ENUM_NAMES(WorkloadKind, {WorkloadKind::kQueueParallel, "queue_parallel"},
                    {WorkloadKind::kWarpCoalesced, "warp_coalesced"}, {WorkloadKind::kBeamSearch, "beam_search"})
SWARMEMU_ENUM_NAMES(LbaDistribution, {LbaDistribution::kUniform, "uniform"}, {LbaDistribution::kZipf, "zipf"})
SWARMEMU_ENUM_NAMES(ClockKind, {ClockKind::kReal, "real"}, {ClockKind::kVirtual, "virtual"})
SWARMEMU_ENUM_NAMES(UpdateMode, {UpdateMode::kPerRequest, "per_request"}, {UpdateMode::kAggregated, "aggregated"})
SWARMEMU_ENUM_NAMES(ModelScope, {ModelScope::kGlobal, "global"}, {ModelScope::kLocal, "local"})

#undef SWARMEMU_ENUM_NAMES

template <typename E>
const char* enum_name(E v) {
  for (const auto& [e, n] : EnumNames<E>::table) {
    if (e == v) return n;
  }
  return "?";
}

template <typename E>
E enum_parse(const std::string& s, const char* what) {
  std::string options;
  for (const auto& [e, n] : EnumNames<E>::table) {
    if (s == n) return e;
    if (!options.empty()) options += '|';
    options += n;
  }
  throw ConfigError("invalid " + std::string(what) + " '" + s + "' (expected " + options + ")");
}

// Field codecs shared by serialization and merging.
template <typename T>
json encode(const T& v) {
  if constexpr (std::is_enum_v<T>) {
    return enum_name(v);
  } else {
    return v;
  }
}

template <typename T>
void decode(const json& j, const std::string& key, T& out) {
  try {
    if constexpr (std::is_enum_v<T>) {
      out = enum_parse<T>(j.get<std::string>(), key.c_str());
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError("'" + key + "' must be a boolean");
      out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.get<std::int64_t>() < 0) throw ConfigError("'" + key + "' must be nonnegative");
      }
      out = j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
      out = j.get<T>();
    } else {
      out = j.get<T>();
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

template <typename F>
void visit(TimingConfig& t, F&& f) {
  f("t_max_iops", t.t_max_iops);
  f("l_min_us", t.l_min_us);
  f("n_instances", t.n_instances);
  f("unit_bytes", t.unit_bytes);
  f("mode", t.mode);
  f("scope", t.scope);
  f("guard_hold_cost_ns", t.guard_hold_cost_ns);
}

template <typename F>
void visit(CopyEngineConfig& c, F&& f) {
  f("groups", c.groups);
  f("wq_depth", c.wq_depth);
  f("pipeline_depth", c.pipeline_depth);
  f("synthetic_issue_cost_ns", c.synthetic_issue_cost_ns);
  f("synthetic_per_copy_cost_ns", c.synthetic_per_copy_cost_ns);
  f("s_timeout_ns", c.s_timeout_ns);
  f("c_timeout_ns", c.c_timeout_ns);
  f("batch_size", c.batch_size);
  f("num_desc", c.num_desc);
}

template <typename F>
void visit(DeviceConfig& d, F&& f) {
  f("capacity_blocks", d.capacity_blocks);
  f("block_bytes", d.block_bytes);
  f("n_service_units", d.n_service_units);
  f("workers_per_unit", d.workers_per_unit);
  f("n_queue_pairs", d.n_queue_pairs);
  f("queue_depth", d.queue_depth);
  f("local_queue_depth", d.local_queue_depth);
  f("max_copies_per_iteration", d.max_copies_per_iteration);
  f("fetch_path", d.fetch_path);
  f("frontend_mode", d.frontend_mode);
  f("fetch_mode", d.fetch_mode);
  f("backend_copy", d.backend_copy);
  f("host_transfer_cost_ns", d.host_transfer_cost_ns);
  f("pattern_seed", d.pattern_seed);
}

template <typename F>
void visit(BeamConfig& b, F&& f) {
  f("batch", b.batch);
  f("width", b.width);
  f("degree", b.degree);
  f("n_nodes", b.n_nodes);
  f("seed", b.seed);
  f("iterations", b.iterations);
}

template <typename F>
void visit(WorkloadSpec& w, F&& f) {
  f("kind", w.kind);
  f("n_submitters", w.n_submitters);
  f("qdepth", w.qdepth);
  f("io_bytes", w.io_bytes);
  f("n_queue_pairs", w.n_queue_pairs);
  f("agents", w.agents);
  f("lba_distribution", w.lba_distribution);
  f("zipf_theta", w.zipf_theta);
  f("skew_units", w.skew_units);
  f("offered_iops", w.offered_iops);
  f("duration_s", w.duration_s);
  f("total_ops", w.total_ops);
  f("verify", w.verify);
  f("cqe_poll_batch", w.cqe_poll_batch);
  f("seed", w.seed);
}

template <typename F>
void visit(RunConfig& r, F&& f) {
  f("run_id", r.run_id);
  f("clock", r.clock);
  f("virtual_pass_ns", r.virtual_pass_ns);
  f("virtual_idle_ns", r.virtual_idle_ns);
  f("warmup_fraction", r.warmup_fraction);
  f("trace_path", r.trace_path);
}

template <typename S>
json section_to_json(S& s) {
  json j = json::object();
  visit(s, [&](const char* key, auto& field) { j[key] = encode(field); });
  return j;
}

template <typename S>
void section_merge(S& s, const json& j, const std::string& where,
                   const std::set<std::string>& nested = {}) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  std::set<std::string> known(nested);
  visit(s, [&](const char* key, auto& field) {
    known.insert(key);
    if (auto it = j.find(key); it != j.end()) decode(*it, where + "." + key, field);
  });
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
  }
}

}  // namespace

const char* to_string(FetchPath v) { return enum_name(v); }
const char* to_string(FrontendMode v) { return enum_name(v); }
const char* to_string(FetchMode v) { return enum_name(v); }
const char* to_string(BackendCopy v) { return enum_name(v); }
const char* to_string(WorkloadKind v) { return enum_name(v); }
const char* to_string(LbaDistribution v) { return enum_name(v); }
const char* to_string(ClockKind v) { return enum_name(v); }

FetchPath parse_fetch_path(const std::string& s) { return enum_parse<FetchPath>(s, "fetch_path"); }
FrontendMode parse_frontend_mode(const std::string& s) { return enum_parse<FrontendMode>(s, "frontend_mode"); }
FetchMode parse_fetch_mode(const std::string& s) { return enum_parse<FetchMode>(s, "fetch_mode"); }
BackendCopy parse_backend_copy(const std::string& s) { return enum_parse<BackendCopy>(s, "backend_copy"); }
WorkloadKind parse_workload_kind(const std::string& s) { return enum_parse<WorkloadKind>(s, "workload kind"); }
LbaDistribution parse_lba_distribution(const std::string& s) {
  return enum_parse<LbaDistribution>(s, "lba_distribution");
}
ClockKind parse_clock_kind(const std::string& s) { return enum_parse<ClockKind>(s, "clock"); }

TimingParams DeviceConfig::timing_params() const {
  try {
    return derive_params(timing.t_max_iops, timing.l_min_us * 1e-6, timing.n_instances, timing.unit_bytes,
                         block_bytes);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void DeviceConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(capacity_blocks >= 1, "capacity_blocks must be at least 1");
  require(block_bytes >= 8 && block_bytes % 8 == 0, "block_bytes must be a positive multiple of 8");
  require(n_service_units >= 1, "n_service_units must be at least 1");
  require(workers_per_unit >= 1, "workers_per_unit must be at least 1");
  require(n_queue_pairs >= 1 && n_queue_pairs <= 65535, "n_queue_pairs must be in [1, 65535]");
  require(frontend_mode == FrontendMode::kCentralized || n_queue_pairs >= n_service_units,
          "distributed mode needs n_queue_pairs >= n_service_units");
  require(queue_depth >= 2 && queue_depth <= 65536 && std::has_single_bit(queue_depth),
          "queue_depth must be a power of two in [2, 65536]");
  require(local_queue_depth >= 1, "local_queue_depth must be at least 1");
  require(max_copies_per_iteration >= 1, "max_copies_per_iteration must be at least 1");
  require(host_transfer_cost_ns >= 0, "host_transfer_cost_ns must be nonnegative");
  require(timing.guard_hold_cost_ns >= 0, "guard_hold_cost_ns must be nonnegative");
  require(timing.unit_bytes >= 1, "unit_bytes must be at least 1");
  timing_params();
  const auto& ce = copy_engine;
  require(ce.wq_depth >= 1, "wq_depth must be at least 1");
  require(ce.pipeline_depth >= 1, "pipeline_depth must be at least 1");
  require(ce.batch_size >= 1, "batch_size must be at least 1");
  require(ce.num_desc >= 1 && ce.num_desc <= ce.wq_depth, "num_desc must be in [1, wq_depth]");
  require(ce.synthetic_issue_cost_ns >= 0 && ce.synthetic_per_copy_cost_ns >= 0,
          "synthetic costs must be nonnegative");
  require(ce.s_timeout_ns >= 0 && ce.c_timeout_ns >= 0, "timeouts must be nonnegative");
}

std::uint32_t BeamConfig::iterations_for(std::uint32_t w) const {
  for (const auto& [width, iters] : iterations) {
    if (width == w) return iters;
  }
  throw ConfigError("no beam iteration count configured for width " + std::to_string(w));
}

void WorkloadSpec::validate(const DeviceConfig& device) const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(n_submitters >= 1, "n_submitters must be at least 1");
  require(io_bytes >= device.block_bytes && io_bytes % device.block_bytes == 0,
          "io_bytes must be a positive multiple of block_bytes");
  require(io_bytes / device.block_bytes <= 65536, "io_bytes exceeds the NLB field");
  require(io_bytes / device.block_bytes <= device.capacity_blocks, "io_bytes exceeds device capacity");
  require(n_queue_pairs <= device.n_queue_pairs, "workload uses more queue pairs than the device has");
  require(qdepth >= 1 && qdepth < device.queue_depth, "qdepth must be in [1, queue_depth - 1]");
  require(duration_s > 0 || total_ops > 0, "either duration_s or total_ops must be positive");
  require(offered_iops >= 0, "offered_iops must be nonnegative");
  require(zipf_theta > 0 && zipf_theta != 1.0, "zipf_theta must be positive and not 1");
  require(skew_units <= device.n_service_units, "skew_units exceeds n_service_units");
  if (kind == WorkloadKind::kBeamSearch) {
    require(beam.batch >= 1 && beam.width >= 1 && beam.degree >= 1, "beam batch/width/degree must be positive");
    require(beam.n_nodes >= 2 && beam.n_nodes <= device.capacity_blocks, "beam graph must fit the device");
    require(beam.degree * 8 <= device.block_bytes, "beam degree exceeds the words of one block");
    require(std::uint64_t{beam.width} * beam.batch < device.queue_depth * std::uint64_t{device.n_queue_pairs},
            "beam batch x width exceeds total queue capacity");
    beam.iterations_for(beam.width);
  }
}

void RunConfig::validate() const {
  device.validate();
  workload.validate(device);
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw ConfigError("warmup_fraction must be in [0, 1)");
  if (virtual_pass_ns < 1 || virtual_idle_ns < 1) throw ConfigError("virtual clock steps must be positive");
}

json to_json(const RunConfig& cfg) {
  RunConfig c = cfg;
  json j = section_to_json(c);
  j["device"] = section_to_json(c.device);
  j["timing"] = section_to_json(c.device.timing);
  j["copy_engine"] = section_to_json(c.device.copy_engine);
  j["workload"] = section_to_json(c.workload);
  j["workload"]["beam"] = section_to_json(c.workload.beam);
  return j;
}

RunConfig merge_json(RunConfig base, const json& j) {
  section_merge(base, j, "config", {"device", "timing", "copy_engine", "workload"});
  if (auto it = j.find("device"); it != j.end()) section_merge(base.device, *it, "device");
  if (auto it = j.find("timing"); it != j.end()) section_merge(base.device.timing, *it, "timing");
  if (auto it = j.find("copy_engine"); it != j.end()) section_merge(base.device.copy_engine, *it, "copy_engine");
  if (auto it = j.find("workload"); it != j.end()) {
    section_merge(base.workload, *it, "workload", {"beam"});
    if (auto b = it->find("beam"); b != it->end()) section_merge(base.workload.beam, *b, "workload.beam");
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return merge_json(std::move(base), j);
}

}  // namespace swarmemu
