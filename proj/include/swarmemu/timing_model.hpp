#pragma once

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "swarmemu/clock.hpp"

namespace swarmemu {

/// Model time is kept in integer picoseconds so that repeated per-request
/// increments and aggregated `base + k * sched` products agree bit-for-bit.
using Picos = std::int64_t;
inline constexpr Picos kPicosPerNano = 1'000;

enum class UpdateMode { kPerRequest, kAggregated };
enum class ModelScope { kGlobal, kLocal };

const char* to_string(UpdateMode mode);
const char* to_string(ModelScope scope);
UpdateMode parse_update_mode(const std::string& s);
ModelScope parse_model_scope(const std::string& s);

/// Throughput/latency parameters of the simple timing model.
struct TimingParams {
  double t_max_iops = 0;         // unit operations per second
  double l_min_seconds = 0;
  std::uint32_t n_instances = 1;
  std::uint32_t unit_bytes = 512;
  std::uint32_t block_bytes = 512;

  // Derived.
  Picos sched_ps = 0;      // per-unit occupancy of one instance
  Picos min_delay_ps = 0;  // max(0, l_min - sched)
  std::string warning;     // set when l_min < sched

  double sched_seconds() const { return static_cast<double>(sched_ps) * 1e-12; }
  double min_delay_seconds() const { return static_cast<double>(min_delay_ps) * 1e-12; }
  /// Latency of a lone request on an idle instance.
  Picos low_load_latency_ps() const { return sched_ps + min_delay_ps; }
};

/// sched = n_instances / t_max, min_delay = max(0, l_min - sched).
/// Throws std::invalid_argument for nonpositive t_max, n_instances or unit
/// size, or a negative l_min.
TimingParams derive_params(double t_max_iops, double l_min_seconds, std::uint32_t n_instances,
                           std::uint32_t unit_bytes = 512, std::uint32_t block_bytes = 512);

/// Per-dispatcher parameter sets, each sustaining t_max / n_dispatchers.
std::vector<TimingParams> local_model_partition(const TimingParams& params,
                                                std::uint32_t n_dispatchers);

/// Scheduling instance of the unit_index-th unit operation of a request.
std::uint32_t instance_of(std::uint64_t slba, std::uint32_t unit_index, const TimingParams& params);

/// ceil(bytes / unit_bytes), at least 1.
std::uint32_t unit_count(std::uint64_t bytes, const TimingParams& params);

/// What the model needs to know about one read.
struct IoExtent {
  std::uint64_t slba = 0;
  std::uint32_t bytes = 512;
};

/// Scratch space reused by one dispatcher across aggregated batches.
struct BatchScratch {
  std::vector<std::uint32_t> counts;
  std::vector<Picos> base;
  std::vector<std::uint32_t> touched;
};

/// Shared timing state: per-instance availability guarded by one mutex.
class TimingModel {
 public:
  explicit TimingModel(TimingParams params, Clock* clock = nullptr);

  TimingModel(const TimingModel&) = delete;
  TimingModel& operator=(const TimingModel&) = delete;

  const TimingParams& params() const { return params_; }

  /// Baseline update: enters the guard once for this request.
  Timestamp schedule_request(const IoExtent& req, Timestamp now);

  /// Baseline update applied to every request of a batch (one guard entry
  /// per request).
  void schedule_batch_per_request(std::span<const IoExtent> reqs, Timestamp now,
                                  std::span<Timestamp> targets);

  /// Aggregated update: unit counts are computed outside the guard, the
  /// availability array is bumped in one guard entry, and per-request targets
  /// are reconstructed afterwards assuming back-to-back service in SQ order.
  void schedule_batch_aggregated(std::span<const IoExtent> reqs, Timestamp now,
                                 std::span<Timestamp> targets, BatchScratch& scratch);

  void schedule_batch(UpdateMode mode, std::span<const IoExtent> reqs, Timestamp now,
                      std::span<Timestamp> targets, BatchScratch& scratch);

  /// Synthetic work performed while holding the guard (ablation knob).
  void set_guard_hold_cost(Nanos ns) { hold_cost_ns_ = ns; }

  /// Fault injection for the validation harness: ignore min_delay.
  void set_drop_min_delay(bool drop) { drop_min_delay_ = drop; }

  std::uint64_t guard_acquisitions() const;
  std::vector<Picos> availability() const;

 private:
  /// Caller holds guard_.
  Picos schedule_locked(const IoExtent& req, Picos now_ps);
  void hold_cost();
  Picos min_delay() const { return drop_min_delay_ ? 0 : params_.min_delay_ps; }

  TimingParams params_;
  Clock* clock_;
  Nanos hold_cost_ns_ = 0;
  Timestamp guard_free_at_ = 0;
  bool drop_min_delay_ = false;

  mutable std::mutex guard_;
  std::vector<Picos> avail_;
  std::uint64_t acquisitions_ = 0;
};

/// ps -> ns, rounded up so a target is never reported early.
inline Timestamp picos_to_target(Picos ps) { return (ps + kPicosPerNano - 1) / kPicosPerNano; }

}  // namespace swarmemu
