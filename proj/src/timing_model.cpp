#include "swarmemu/timing_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace swarmemu {

const char* to_string(UpdateMode mode) {
  return mode == UpdateMode::kAggregated ? "aggregated" : "per_request";
}

const char* to_string(ModelScope scope) { return scope == ModelScope::kGlobal ? "global" : "local"; }

UpdateMode parse_update_mode(const std::string& s) {
  if (s == "aggregated") return UpdateMode::kAggregated;
  if (s == "per_request") return UpdateMode::kPerRequest;
  throw std::invalid_argument("unknown timing mode '" + s + "' (expected per_request|aggregated)");
}

ModelScope parse_model_scope(const std::string& s) {
  if (s == "global") return ModelScope::kGlobal;
  if (s == "local") return ModelScope::kLocal;
  throw std::invalid_argument("unknown timing scope '" + s + "' (expected global|local)");
}

TimingParams derive_params(double t_max_iops, double l_min_seconds, std::uint32_t n_instances,
                           std::uint32_t unit_bytes, std::uint32_t block_bytes) {
  if (!(t_max_iops > 0)) throw std::invalid_argument("t_max must be positive");
  if (n_instances == 0) throw std::invalid_argument("n_instances must be at least 1");
  if (!(l_min_seconds >= 0)) throw std::invalid_argument("l_min must be nonnegative");
  if (unit_bytes == 0 || block_bytes == 0) throw std::invalid_argument("unit/block size must be positive");

  TimingParams p;
  p.t_max_iops = t_max_iops;
  p.l_min_seconds = l_min_seconds;
  p.n_instances = n_instances;
  p.unit_bytes = unit_bytes;
  p.block_bytes = block_bytes;
  p.sched_ps = static_cast<Picos>(std::llround(static_cast<double>(n_instances) * 1e12 / t_max_iops));
  if (p.sched_ps <= 0) throw std::invalid_argument("t_max too large: scheduling time rounds to zero");
  const Picos l_min_ps = static_cast<Picos>(std::llround(l_min_seconds * 1e12));
  p.min_delay_ps = std::max<Picos>(0, l_min_ps - p.sched_ps);
  if (l_min_ps < p.sched_ps) {
    std::ostringstream os;
    os << "l_min (" << l_min_seconds * 1e6 << " us) is below the scheduling time ("
       << p.sched_seconds() * 1e6 << " us); low-load latency will equal the scheduling time";
    p.warning = os.str();
  }
  return p;
}

std::vector<TimingParams> local_model_partition(const TimingParams& params, std::uint32_t n_dispatchers) {
  if (n_dispatchers == 0) throw std::invalid_argument("n_dispatchers must be at least 1");
  std::vector<TimingParams> out;
  out.reserve(n_dispatchers);
  for (std::uint32_t i = 0; i < n_dispatchers; ++i) {
    out.push_back(derive_params(params.t_max_iops / n_dispatchers, params.l_min_seconds,
                                params.n_instances, params.unit_bytes, params.block_bytes));
  }
  return out;
}

std::uint32_t instance_of(std::uint64_t slba, std::uint32_t unit_index, const TimingParams& params) {
  const std::uint64_t first_unit = slba * params.block_bytes / params.unit_bytes;
  return static_cast<std::uint32_t>((first_unit + unit_index) % params.n_instances);
}

std::uint32_t unit_count(std::uint64_t bytes, const TimingParams& params) {
  const std::uint64_t n = (bytes + params.unit_bytes - 1) / params.unit_bytes;
  return static_cast<std::uint32_t>(std::max<std::uint64_t>(1, n));
}

TimingModel::TimingModel(TimingParams params, Clock* clock)
    : params_(std::move(params)), clock_(clock), avail_(params_.n_instances, 0) {}

void TimingModel::hold_cost() {
  if (hold_cost_ns_ <= 0 || clock_ == nullptr) return;
  // Under a virtual clock the mutex is never contended, so the holder's
  // occupancy is tracked explicitly: a later entrant waits for it.
  const Timestamp t = clock_->now();
  const Timestamp start = std::max(t, guard_free_at_);
  clock_->spin_for(start - t + hold_cost_ns_);
  guard_free_at_ = start + hold_cost_ns_;
}

Picos TimingModel::schedule_locked(const IoExtent& req, Picos now_ps) {
  const std::uint32_t units = unit_count(req.bytes, params_);
  Picos target = 0;
  for (std::uint32_t j = 0; j < units; ++j) {
    Picos& avail = avail_[instance_of(req.slba, j, params_)];
    const Picos start = std::max(now_ps, avail);
    avail = start + params_.sched_ps;
    target = std::max(target, start + params_.sched_ps + min_delay());
  }
  return target;
}

Timestamp TimingModel::schedule_request(const IoExtent& req, Timestamp now) {
  std::lock_guard lock(guard_);
  ++acquisitions_;
  hold_cost();
  return picos_to_target(schedule_locked(req, now * kPicosPerNano));
}

void TimingModel::schedule_batch_per_request(std::span<const IoExtent> reqs, Timestamp now,
                                             std::span<Timestamp> targets) {
  for (std::size_t i = 0; i < reqs.size(); ++i) targets[i] = schedule_request(reqs[i], now);
}

void TimingModel::schedule_batch_aggregated(std::span<const IoExtent> reqs, Timestamp now,
                                            std::span<Timestamp> targets, BatchScratch& scratch) {
  if (reqs.empty()) return;
  const std::uint32_t n = params_.n_instances;
  if (scratch.counts.size() != n) {
    scratch.counts.assign(n, 0);
    scratch.base.assign(n, 0);
    scratch.touched.clear();
  }

  // Outside the guard: total unit operations per instance.
  for (const auto& req : reqs) {
    const std::uint32_t units = unit_count(req.bytes, params_);
    for (std::uint32_t j = 0; j < units; ++j) {
      const std::uint32_t inst = instance_of(req.slba, j, params_);
      if (scratch.counts[inst]++ == 0) scratch.touched.push_back(inst);
    }
  }

  const Picos now_ps = now * kPicosPerNano;
  {
    std::lock_guard lock(guard_);
    ++acquisitions_;
    hold_cost();
    for (const std::uint32_t inst : scratch.touched) {
      const Picos base = std::max(now_ps, avail_[inst]);
      scratch.base[inst] = base;
      avail_[inst] = base + static_cast<Picos>(scratch.counts[inst]) * params_.sched_ps;
    }
  }

  // Outside again: the k-th unit on an instance starts at base + k * sched.
  // `counts` is reused as the running per-instance unit index.
  for (const std::uint32_t inst : scratch.touched) scratch.counts[inst] = 0;
  const Picos delay = min_delay();
  for (std::size_t r = 0; r < reqs.size(); ++r) {
    const std::uint32_t units = unit_count(reqs[r].bytes, params_);
    Picos target = 0;
    for (std::uint32_t j = 0; j < units; ++j) {
      const std::uint32_t inst = instance_of(reqs[r].slba, j, params_);
      const Picos start = scratch.base[inst] + static_cast<Picos>(scratch.counts[inst]++) * params_.sched_ps;
      target = std::max(target, start + params_.sched_ps + delay);
    }
    targets[r] = picos_to_target(target);
  }
  for (const std::uint32_t inst : scratch.touched) scratch.counts[inst] = 0;
  scratch.touched.clear();
}

void TimingModel::schedule_batch(UpdateMode mode, std::span<const IoExtent> reqs, Timestamp now,
                                 std::span<Timestamp> targets, BatchScratch& scratch) {
  if (mode == UpdateMode::kAggregated) {
    schedule_batch_aggregated(reqs, now, targets, scratch);
  } else {
    schedule_batch_per_request(reqs, now, targets);
  }
}

std::uint64_t TimingModel::guard_acquisitions() const {
  std::lock_guard lock(guard_);
  return acquisitions_;
}

std::vector<Picos> TimingModel::availability() const {
  std::lock_guard lock(guard_);
  return avail_;
}

}  // namespace swarmemu
