#include "swarmemu/device.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "swarmemu/runner.hpp"

namespace swarmemu {

// ---- Worker ---------------------------------------------------------------

Worker::Worker(std::uint32_t unit, std::uint32_t index, Device& device, EngineGroup* group,
               std::uint32_t wq_index)
    : unit_(unit),
      index_(index),
      device_(device),
      clock_(device.clock()),
      local_(device.config().local_queue_depth) {
  if (group != nullptr) {
    const auto& ce = device.config().copy_engine;
    ctx_ = std::make_unique<OffloadContext>(*group, wq_index, ce.batch_size, ce.num_desc);
  }
}

std::string Worker::name() const { return "worker" + std::to_string(unit_) + "." + std::to_string(index_); }

Timestamp Worker::next_event() const {
  if (!local_.empty()) return 0;
  Timestamp t = ready_.empty() ? kNever : ready_.top().target;
  if (ctx_ != nullptr) {
    const auto& ce = device_.config().copy_engine;
    if (const Timestamp p = ctx_->oldest_pending_append(); p != kNever) t = std::min(t, p + ce.s_timeout_ns);
    if (const Timestamp f = ctx_->oldest_in_flight_issue(); f != kNever) t = std::min(t, f + ce.c_timeout_ns);
  }
  return t;
}

bool Worker::step() {
  const IterationResult r = iterate();
  return r.copies_issued > 0 || r.completions_posted > 0;
}

Worker::IterationResult Worker::iterate() {
  IterationResult result;
  const std::uint64_t posted_before = posted_.load(std::memory_order_relaxed);
  const auto& cfg = device_.config();

  // Phase 1: issue copies for up to max_copies_per_iteration new requests.
  RequestRecord rec;
  for (std::uint32_t i = 0; i < cfg.max_copies_per_iteration && local_.try_pop(rec); ++i) {
    if (rec.status != nvme::Status::kSuccess) {
      post(rec);
      continue;
    }
    if (ctx_ == nullptr) {
      rec.copy_done = clock_.now();
      rec.state = RequestState::kCopyDone;
      ready_.push(rec);
      continue;
    }
    rec.batch_seq = ctx_->pending_seq();
    rec.state = RequestState::kCopyIssued;
    copying_.push_back(rec);
    const RegionAddress src{device_.store_region(), rec.slba * cfg.block_bytes};
    ctx_->batch_issue_async(rec.data, src, rec.blocks() * cfg.block_bytes);
    ++result.copies_issued;
  }

  // Phase 2: timeout-driven issue and wait, then reap and sweep.
  if (ctx_ != nullptr) {
    const auto& ce = cfg.copy_engine;
    if (ctx_->batch_should_issue_pending(ce.s_timeout_ns)) ctx_->batch_issue_pending();
    if (ctx_->batch_should_wait(ce.c_timeout_ns)) mark_batch(ctx_->batch_wait_oldest());
    done_.clear();
    ctx_->poll_completions(done_);
    for (const auto& b : done_) mark_batch(b);
  }
  const Timestamp now = clock_.now();
  while (!ready_.empty() && ready_.top().target <= now) {
    RequestRecord r = ready_.top();
    ready_.pop();
    post(r);
  }
  result.completions_posted = static_cast<std::uint32_t>(posted_.load(std::memory_order_relaxed) - posted_before);
  return result;
}

void Worker::mark_batch(const CompletedBatch& b) {
  const Timestamp now = clock_.now();
  while (!copying_.empty() && copying_.front().batch_seq == b.seq) {
    RequestRecord rec = copying_.front();
    copying_.pop_front();
    rec.copy_done = now;
    rec.state = RequestState::kCopyDone;
    if (is_error(b.status)) {
      rec.status = nvme::Status::kDataTransferError;
      post(rec);
    } else {
      ready_.push(rec);
    }
  }
}

void Worker::post(RequestRecord& rec) {
  rec.posted = clock_.now();
  if (rec.status == nvme::Status::kSuccess) {
    if (rec.posted < rec.target) ++early_posts_;
  } else {
    ++errors_;
    if (rec.copy_done == 0) rec.copy_done = rec.posted;
  }
  rec.state = RequestState::kCompleted;
  device_.post(rec);
  if (recording_) log_.push_back(rec);
  posted_.fetch_add(1, std::memory_order_release);
}

// ---- Dispatcher -----------------------------------------------------------

Dispatcher::Dispatcher(std::uint32_t unit, Device& device, std::vector<QueuePair*> qps,
                       std::vector<Worker*> workers, TimingModel& timing, EngineGroup* fetch_group)
    : unit_(unit),
      device_(device),
      clock_(device.clock()),
      qps_(std::move(qps)),
      workers_(std::move(workers)),
      timing_(timing),
      fetch_group_(fetch_group),
      fetch_buf_(device.config().queue_depth) {
  if (workers_.empty()) throw std::invalid_argument("a dispatcher needs at least one worker");
  fetch_region_ = device.register_internal(fetch_buf_.bytes(), name() + ".fetch");
  const std::uint32_t depth = device.config().queue_depth;
  records_.resize(depth);
  extents_.reserve(depth);
  valid_.reserve(depth);
  targets_.resize(depth);
}

void Dispatcher::copy_from_ring(QueuePair& qp, std::size_t src_off, std::size_t dst_off, std::size_t len) {
  ++transfers_;
  if (fetch_group_ != nullptr) {
    const CopyStatus s = fetch_group_->sync_copy(0, {fetch_region_, dst_off}, {device_.qp_region(qp.qid()), src_off},
                                                 static_cast<std::uint32_t>(len));
    if (is_error(s)) {
      throw std::runtime_error("fatal device error: fetch transfer failed on qid " + std::to_string(qp.qid()));
    }
    return;
  }
  std::memcpy(fetch_buf_.bytes().data() + dst_off, qp.sq_ring().data() + src_off, len);
  clock_.spin_for(device_.config().host_transfer_cost_ns);
}

std::uint32_t Dispatcher::drain(QueuePair& qp) {
  std::uint32_t n = qp.pending();
  if (n == 0) return 0;

  // Round-robin hands out at most ceil(n / W) per worker, so W times the
  // smallest free space always fits.
  std::size_t min_free = SIZE_MAX;
  for (Worker* w : workers_) min_free = std::min(min_free, w->local_queue().free_slots());
  const std::size_t cap = min_free * workers_.size();
  if (cap < n) {
    ++stalls_;
    n = static_cast<std::uint32_t>(cap);
    if (n == 0) return 0;
  }

  auto copy = [&](std::size_t src, std::size_t dst, std::size_t len) { copy_from_ring(qp, src, dst, len); };
  const auto& cfg = device_.config();
  if (cfg.fetch_mode == FetchMode::kCoalesced) {
    qp.fetch_coalesced(n, fetch_buf_, copy);
  } else {
    qp.fetch_per_entry(n, fetch_buf_, copy);
  }
  const Timestamp fetch_time = clock_.now();
  const auto head = static_cast<std::uint16_t>(qp.sq_head());

  extents_.clear();
  valid_.clear();
  for (std::uint32_t i = 0; i < n; ++i) {
    const nvme::Command cmd = nvme::decode(fetch_buf_.entry(i));
    RequestRecord& r = records_[i];
    r = RequestRecord{};
    r.qid = qp.qid();
    r.cid = cmd.cid;
    r.sq_head = head;
    r.slba = cmd.slba;
    r.nlb = cmd.nlb;
    r.fetch = fetch_time;
    const std::uint64_t bytes = std::uint64_t{cmd.block_count()} * cfg.block_bytes;
    if (cmd.opcode != nvme::kOpcodeRead) {
      r.status = nvme::Status::kInvalidOpcode;
    } else if (cmd.nsid != nvme::kNamespaceId) {
      r.status = nvme::Status::kInvalidNamespace;
    } else if (cmd.slba >= cfg.capacity_blocks || cmd.block_count() > cfg.capacity_blocks - cmd.slba) {
      r.status = nvme::Status::kLbaOutOfRange;
    } else if (!device_.host().translate(cmd.data_ptr, bytes, r.data)) {
      r.status = nvme::Status::kInvalidField;
    }
    if (r.status == nvme::Status::kSuccess) {
      valid_.push_back(i);
      extents_.push_back({cmd.slba, static_cast<std::uint32_t>(bytes)});
    } else {
      // Decode errors bypass the timing model.
      r.target = fetch_time;
    }
  }

  timing_.schedule_batch(cfg.timing.mode, extents_, fetch_time, std::span(targets_).first(extents_.size()),
                         scratch_);
  for (std::size_t k = 0; k < valid_.size(); ++k) records_[valid_[k]].target = targets_[k];

  for (std::uint32_t i = 0; i < n; ++i) {
    Worker* w = workers_[rr_worker_];
    rr_worker_ = (rr_worker_ + 1) % workers_.size();
    if (!w->local_queue().try_push(records_[i])) {
      throw std::logic_error("local queue overflow despite backpressure");
    }
  }
  fetched_.fetch_add(n, std::memory_order_release);
  return n;
}

std::uint32_t Dispatcher::iterate() {
  ++iterations_;
  std::uint32_t total = 0;
  const std::size_t nq = qps_.size();
  for (std::size_t k = 0; k < nq; ++k) total += drain(*qps_[(rr_qp_ + k) % nq]);
  rr_qp_ = (rr_qp_ + 1) % nq;
  return total;
}

// ---- Device ---------------------------------------------------------------

Device::Device(const DeviceConfig& config, Clock& clock) : config_(config), clock_(clock) {
  config_.validate();
  store_ = std::make_unique<BackingStore>(config_.capacity_blocks, config_.block_bytes, config_.pattern_seed);
  store_region_ = memory_.add(store_->bytes(), "store");
  cq_locks_ = std::make_unique<std::mutex[]>(config_.n_queue_pairs);
  posted_per_qp_.assign(config_.n_queue_pairs, 0);
  for (std::uint32_t q = 0; q < config_.n_queue_pairs; ++q) {
    qps_.push_back(std::make_unique<QueuePair>(static_cast<std::uint16_t>(q), config_.queue_depth));
    qp_regions_.push_back(memory_.add(qps_.back()->memory(), "qp" + std::to_string(q)));
  }
}

Device::~Device() = default;

std::uint32_t Device::unit_of(std::uint32_t qid) const {
  return config_.frontend_mode == FrontendMode::kCentralized ? 0 : qid % config_.n_service_units;
}

std::uint64_t Device::register_host_region(std::span<std::byte> memory, const std::string& name) {
  if (started_) throw std::logic_error("host regions must be registered before start()");
  const RegionId id = memory_.add(memory, name);
  return host_.map(memory, id);
}

RegionId Device::register_internal(std::span<std::byte> memory, const std::string& name) {
  if (started_) throw std::logic_error("regions must be registered before start()");
  return memory_.add(memory, name);
}

void Device::start() {
  if (started_) throw std::logic_error("device already started");
  const std::uint32_t n_units = config_.n_service_units;
  const bool distributed = config_.frontend_mode == FrontendMode::kDistributed;
  const std::uint32_t n_dispatchers = distributed ? n_units : 1;

  // Timing models: one shared, or one per dispatcher with t_max / N each.
  const TimingParams params = config_.timing_params();
  if (config_.timing.scope == ModelScope::kGlobal) {
    timing_.push_back(std::make_unique<TimingModel>(params, &clock_));
  } else {
    for (auto& p : local_model_partition(params, n_dispatchers)) {
      timing_.push_back(std::make_unique<TimingModel>(p, &clock_));
    }
  }
  for (auto& tm : timing_) {
    tm->set_guard_hold_cost(config_.timing.guard_hold_cost_ns);
    tm->set_drop_min_delay(config_.timing.drop_min_delay);
  }

  // Engine groups: WQ 0 serves the dispatcher's synchronous fetches, WQs
  // 1..k the workers bound to the group.
  const std::uint32_t n_groups = config_.engine_groups();
  std::vector<std::uint32_t> workers_in_group(n_groups, 0);
  for (std::uint32_t u = 0; u < n_units; ++u) workers_in_group[u % n_groups] += config_.workers_per_unit;
  const auto& ce = config_.copy_engine;
  EngineConfig ec;
  ec.wq_depth = ce.wq_depth;
  ec.wqs_per_group = 1 + *std::max_element(workers_in_group.begin(), workers_in_group.end());
  ec.pipeline_depth = ce.pipeline_depth;
  ec.issue_cost_ns = ce.synthetic_issue_cost_ns;
  ec.per_copy_cost_ns = ce.synthetic_per_copy_cost_ns;
  engine_ = std::make_unique<CopyEngine>(memory_, clock_);

  // Dispatchers still register their fetch buffers below; that is safe
  // because no descriptor executes before start() returns.
  engine_->configure(n_groups, ec);
  std::vector<std::uint32_t> next_wq(n_groups, 1);
  units_.resize(n_units);
  for (std::uint32_t u = 0; u < n_units; ++u) units_[u].id = u;
  std::vector<std::vector<QueuePair*>> unit_qps(n_units);
  for (auto& qp : qps_) unit_qps[unit_of(qp->qid())].push_back(qp.get());

  for (std::uint32_t u = 0; u < n_units; ++u) {
    ServiceUnit& unit = units_[u];
    unit.group = &engine_->group(u % n_groups);
    for (std::uint32_t w = 0; w < config_.workers_per_unit; ++w) {
      EngineGroup* g = config_.backend_copy == BackendCopy::kEngine ? unit.group : nullptr;
      const std::uint32_t wq = next_wq[u % n_groups]++;
      unit.workers.push_back(std::make_unique<Worker>(u, w, *this, g, wq));
    }
  }
  for (std::uint32_t u = 0; u < n_dispatchers; ++u) {
    std::vector<Worker*> ws;
    if (distributed) {
      for (auto& w : units_[u].workers) ws.push_back(w.get());
    } else {
      for (auto& unit : units_) {
        for (auto& w : unit.workers) ws.push_back(w.get());
      }
    }
    TimingModel& tm = *timing_[config_.timing.scope == ModelScope::kGlobal ? 0 : u];
    EngineGroup* fg = config_.fetch_path == FetchPath::kEngine ? units_[u].group : nullptr;
    units_[u].dispatcher = std::make_unique<Dispatcher>(u, *this, unit_qps[u], std::move(ws), tm, fg);
  }
  started_ = true;
}

std::vector<Agent*> Device::agents() {
  std::vector<Agent*> out;
  for (auto& unit : units_) {
    if (unit.dispatcher) out.push_back(unit.dispatcher.get());
    for (auto& w : unit.workers) out.push_back(w.get());
  }
  for (std::uint32_t g = 0; g < engine_->size(); ++g) out.push_back(&engine_->group(g));
  return out;
}

TimingModel& Device::timing_model(std::uint32_t unit) {
  if (timing_.empty()) throw std::logic_error("device not started");
  return *timing_.at(config_.timing.scope == ModelScope::kGlobal ? 0 : unit);
}

bool Device::quiescent() const {
  for (const auto& qp : qps_) {
    if (qp->unfetched() != 0) return false;
  }
  std::uint64_t fetched = 0;
  std::uint64_t posted = 0;
  for (const auto& unit : units_) {
    if (unit.dispatcher) fetched += unit.dispatcher->fetched();
    for (const auto& w : unit.workers) posted += w->posted();
  }
  return fetched == posted;
}

bool Device::drain(AgentRunner& runner, Timestamp deadline) {
  return runner.run_until([this] { return quiescent(); }, deadline);
}

void Device::post(const RequestRecord& rec) {
  QueuePair& qp = *qps_[rec.qid];
  std::lock_guard lock(cq_locks_[rec.qid]);
  if (TraceSlot* t = qp.trace(rec.cid)) *t = {rec.fetch, rec.target, rec.copy_done, rec.posted};
  qp.post_completion(rec.cid, rec.sq_head, rec.status);
  ++posted_per_qp_[rec.qid];
}

DeviceCounters Device::stop() {
  if (!started_) throw std::logic_error("device not started");
  if (!quiescent()) throw std::logic_error("device stopped with outstanding requests");
  DeviceCounters c;
  c.fetched_per_unit.assign(units_.size(), 0);
  for (const auto& unit : units_) {
    if (const auto& d = unit.dispatcher) {
      c.fetched += d->fetched();
      c.fetch_transfers += d->fetch_transfers();
      c.dispatcher_iterations += d->iterations();
      c.backpressure_stalls += d->backpressure_stalls();
      c.fetched_per_unit[unit.id] = d->fetched();
    }
    for (const auto& w : unit.workers) {
      c.posted += w->posted();
      c.errors += w->errors_;
      c.early_posts += w->early_posts();
      if (const OffloadContext* ctx = w->context()) {
        c.batches_issued += ctx->batches_issued();
        c.copies_issued += ctx->copies_issued();
      }
    }
  }
  for (const auto& tm : timing_) c.guard_acquisitions += tm->guard_acquisitions();
  for (const auto& qp : qps_) c.doorbell_writes += qp->doorbell_writes();
  c.posted_per_qp = posted_per_qp_;
  return c;
}

std::vector<RequestRecord> Device::request_log() const {
  std::vector<RequestRecord> out;
  for (const auto& unit : units_) {
    for (const auto& w : unit.workers) out.insert(out.end(), w->log().begin(), w->log().end());
  }
  return out;
}

void Device::set_recording(bool on) {
  for (auto& unit : units_) {
    for (auto& w : unit.workers) w->set_recording(on);
  }
}

}  // namespace swarmemu
