#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "swarmemu/agent.hpp"
#include "swarmemu/clock.hpp"
#include "swarmemu/config.hpp"
#include "swarmemu/copy_engine.hpp"
#include "swarmemu/memory.hpp"
#include "swarmemu/nvme.hpp"
#include "swarmemu/pattern.hpp"
#include "swarmemu/queue_pair.hpp"
#include "swarmemu/spsc_ring.hpp"
#include "swarmemu/timing_model.hpp"

namespace swarmemu {

class AgentRunner;
class Device;

enum class RequestState : std::uint8_t { kFetched, kCopyIssued, kCopyDone, kCompleted };

/// Lifecycle of one read inside the device. Timestamps are nondecreasing in
/// declaration order; submit is only known to the submitter and stays 0.
struct RequestRecord {
  std::uint16_t qid = 0;
  std::uint16_t cid = 0;
  std::uint16_t sq_head = 0;  // dispatcher head right after the fetch
  std::uint64_t slba = 0;
  std::uint32_t nlb = 0;
  RegionAddress data;
  nvme::Status status = nvme::Status::kSuccess;
  RequestState state = RequestState::kFetched;
  std::uint64_t batch_seq = 0;

  Timestamp submit = 0;
  Timestamp fetch = 0;
  Timestamp target = 0;
  Timestamp copy_done = 0;
  Timestamp posted = 0;

  std::uint32_t blocks() const { return nlb + 1; }
};

/// Device-wide counters collected at stop.
struct DeviceCounters {
  std::uint64_t fetched = 0;
  std::uint64_t posted = 0;
  std::uint64_t errors = 0;
  std::uint64_t early_posts = 0;  // must stay 0
  std::uint64_t fetch_transfers = 0;
  std::uint64_t doorbell_writes = 0;
  std::uint64_t batches_issued = 0;
  std::uint64_t copies_issued = 0;
  std::uint64_t guard_acquisitions = 0;
  std::uint64_t dispatcher_iterations = 0;
  std::uint64_t backpressure_stalls = 0;
  std::vector<std::uint64_t> posted_per_qp;
  std::vector<std::uint64_t> fetched_per_unit;
};

/// Per-worker consumer of dispatched requests: issues the backing-store
/// copies through its OffloadContext and posts a completion once the copy is
/// done and the target time has passed.
class Worker final : public Agent {
 public:
  Worker(std::uint32_t unit, std::uint32_t index, Device& device, EngineGroup* group, std::uint32_t wq_index);

  SpscRing<RequestRecord>& local_queue() { return local_; }

  bool step() override;
  std::string name() const override;
  Timestamp next_event() const override;

  struct IterationResult {
    std::uint32_t copies_issued = 0;
    std::uint32_t completions_posted = 0;
  };
  /// One pass of phase 1 (issue) and phase 2 (reap and sweep).
  IterationResult iterate();

  /// Requests accepted but not yet posted.
  std::size_t outstanding() const { return local_.size() + copying_.size() + ready_.size(); }
  std::uint64_t posted() const { return posted_.load(std::memory_order_acquire); }
  std::uint64_t early_posts() const { return early_posts_; }
  const OffloadContext* context() const { return ctx_.get(); }

  void set_recording(bool on) { recording_ = on; }
  const std::vector<RequestRecord>& log() const { return log_; }

 private:
  struct TargetLater {
    bool operator()(const RequestRecord& a, const RequestRecord& b) const { return a.target > b.target; }
  };

  void mark_batch(const CompletedBatch& b);
  void post(RequestRecord& rec);

  std::uint32_t unit_;
  std::uint32_t index_;
  Device& device_;
  Clock& clock_;
  SpscRing<RequestRecord> local_;
  std::unique_ptr<OffloadContext> ctx_;
  std::deque<RequestRecord> copying_;
  std::priority_queue<RequestRecord, std::vector<RequestRecord>, TargetLater> ready_;
  std::vector<CompletedBatch> done_;
  std::atomic<std::uint64_t> posted_{0};
  std::uint64_t early_posts_ = 0;
  std::uint64_t errors_ = 0;
  bool recording_ = false;
  std::vector<RequestRecord> log_;

  friend class Device;
};

/// Fetches new submissions from its queue pairs, stamps targets through the
/// timing model and hands requests to its workers round-robin.
class Dispatcher final : public Agent {
 public:
  Dispatcher(std::uint32_t unit, Device& device, std::vector<QueuePair*> qps, std::vector<Worker*> workers,
             TimingModel& timing, EngineGroup* fetch_group);

  bool step() override { return iterate() > 0; }
  std::string name() const override { return "dispatcher" + std::to_string(unit_); }

  /// Drains every assigned queue pair once; returns the number fetched.
  std::uint32_t iterate();

  const std::vector<QueuePair*>& queue_pairs() const { return qps_; }
  std::uint64_t fetched() const { return fetched_.load(std::memory_order_acquire); }
  std::uint64_t fetch_transfers() const { return transfers_; }
  std::uint64_t iterations() const { return iterations_; }
  std::uint64_t backpressure_stalls() const { return stalls_; }
  TimingModel& timing() { return timing_; }

 private:
  std::uint32_t drain(QueuePair& qp);
  void copy_from_ring(QueuePair& qp, std::size_t src_off, std::size_t dst_off, std::size_t len);

  std::uint32_t unit_;
  Device& device_;
  Clock& clock_;
  std::vector<QueuePair*> qps_;
  std::vector<Worker*> workers_;
  TimingModel& timing_;
  EngineGroup* fetch_group_;
  FetchBuffer fetch_buf_;
  RegionId fetch_region_ = 0;

  std::size_t rr_qp_ = 0;
  std::size_t rr_worker_ = 0;
  std::vector<RequestRecord> records_;
  std::vector<IoExtent> extents_;
  std::vector<std::size_t> valid_;
  std::vector<Timestamp> targets_;
  BatchScratch scratch_;

  std::atomic<std::uint64_t> fetched_{0};
  std::uint64_t transfers_ = 0;
  std::uint64_t iterations_ = 0;
  std::uint64_t stalls_ = 0;

  friend class Device;
};

/// One dispatcher (absent on non-leading units in centralized mode) plus its
/// workers, bound to one engine group.
struct ServiceUnit {
  std::uint32_t id = 0;
  std::unique_ptr<Dispatcher> dispatcher;
  std::vector<std::unique_ptr<Worker>> workers;
  EngineGroup* group = nullptr;
};

/// The emulated SSD.
///
/// Lifecycle: construct (backing store and queue pairs exist), register the
/// host data regions that SQE data pointers refer to, start(), let a runner
/// step agents(), then stop() once quiescent.
class Device {
 public:
  /// Throws ConfigError for an invalid configuration.
  Device(const DeviceConfig& config, Clock& clock);
  ~Device();

  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const DeviceConfig& config() const { return config_; }
  Clock& clock() { return clock_; }
  const BackingStore& store() const { return *store_; }

  std::uint32_t queue_pair_count() const { return static_cast<std::uint32_t>(qps_.size()); }
  QueuePair& queue_pair(std::uint32_t i) { return *qps_.at(i); }
  /// Unit owning queue pair `qid` (qid mod units in distributed mode).
  std::uint32_t unit_of(std::uint32_t qid) const;

  /// Makes `memory` addressable by SQE data pointers; returns its base
  /// address. Only valid before start().
  std::uint64_t register_host_region(std::span<std::byte> memory, const std::string& name);

  void start();
  bool started() const { return started_; }

  std::vector<Agent*> agents();
  const std::vector<ServiceUnit>& units() const { return units_; }
  CopyEngine& copy_engine() { return *engine_; }
  /// The shared model (global scope) or the model of dispatcher `unit`.
  TimingModel& timing_model(std::uint32_t unit = 0);

  /// True when no submitted entry is left unfetched and every fetched
  /// request has been posted.
  bool quiescent() const;

  /// Steps `runner` until quiescent. Returns false if `deadline` passed first.
  bool drain(AgentRunner& runner, Timestamp deadline = kNever);

  /// Collects counters. The device must be quiescent.
  DeviceCounters stop();

  /// Completed-request logs of all workers (when recording is enabled).
  std::vector<RequestRecord> request_log() const;
  void set_recording(bool on);

  // Used by the agents.
  const MemoryRegistry& memory() const { return memory_; }
  const HostAddressSpace& host() const { return host_; }
  RegionId store_region() const { return store_region_; }
  RegionId qp_region(std::uint16_t qid) const { return qp_regions_.at(qid); }
  RegionId register_internal(std::span<std::byte> memory, const std::string& name);
  void post(const RequestRecord& rec);

 private:
  DeviceConfig config_;
  Clock& clock_;
  std::unique_ptr<BackingStore> store_;
  MemoryRegistry memory_;
  HostAddressSpace host_;
  RegionId store_region_ = 0;
  std::vector<std::unique_ptr<QueuePair>> qps_;
  std::vector<RegionId> qp_regions_;
  std::unique_ptr<std::mutex[]> cq_locks_;
  std::vector<std::uint64_t> posted_per_qp_;
  std::vector<std::unique_ptr<TimingModel>> timing_;
  std::unique_ptr<CopyEngine> engine_;
  std::vector<ServiceUnit> units_;
  bool started_ = false;
};

}  // namespace swarmemu
