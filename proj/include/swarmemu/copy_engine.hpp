#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "swarmemu/agent.hpp"
#include "swarmemu/clock.hpp"
#include "swarmemu/memory.hpp"
#include "swarmemu/spsc_ring.hpp"

namespace swarmemu {

/// One-byte completion record values. Anything >= kBadRange is an error.
enum class CopyStatus : std::uint8_t {
  kPending = 0,
  kDone = 1,
  kBadRange = 2,
};

inline bool is_error(CopyStatus s) { return static_cast<std::uint8_t>(s) >= 2; }

struct CopyDescriptor {
  RegionAddress src;
  RegionAddress dst;
  std::uint32_t len = 0;
};

/// What a work queue slot holds: a single copy (count == 1) or a batch
/// descriptor pointing at an array of copies. Storage is owned by whoever
/// issued it and reused across submissions.
struct WorkItem {
  CopyDescriptor* descs = nullptr;
  std::uint32_t count = 0;
  std::uint64_t tag = 0;
  std::atomic<std::uint8_t> completion{0};

  // Engine-private bookkeeping.
  std::uint32_t started = 0;
  std::uint32_t retired = 0;
  std::uint8_t status = 1;

  CopyStatus load_status() const {
    return static_cast<CopyStatus>(completion.load(std::memory_order_acquire));
  }
};

struct EngineConfig {
  std::uint32_t wq_depth = 32;
  std::uint32_t wqs_per_group = 2;
  std::uint32_t pipeline_depth = 8;
  Nanos issue_cost_ns = 0;     // charged to the issuer per descriptor submitted
  Nanos per_copy_cost_ns = 0;  // latency of each copy inside the engine
};

/// Dedicated-mode work queue: one owner produces, the group's engine consumes.
class WorkQueue {
 public:
  explicit WorkQueue(std::uint32_t depth) : depth_(depth), ring_(depth) {}

  std::uint32_t depth() const { return depth_; }
  bool try_claim() { return !owned_.exchange(true, std::memory_order_acq_rel); }
  void release() { owned_.store(false, std::memory_order_release); }
  bool owned() const { return owned_.load(std::memory_order_acquire); }

  bool push(WorkItem* item) { return ring_.try_push(item); }
  bool pop(WorkItem*& item) { return ring_.try_pop(item); }
  std::size_t size() const { return ring_.size(); }

 private:
  std::uint32_t depth_;
  SpscRing<WorkItem*> ring_;
  std::atomic<bool> owned_{false};
};

/// One engine with its work queues.
///
/// The engine takes work items round-robin across its queues (FIFO within a
/// queue) and streams the copies of the current item into a pipeline of
/// `pipeline_depth` concurrently executing copies. Data is moved when a copy
/// enters the pipeline; its completion becomes visible `per_copy_cost_ns`
/// later. An item's completion record is stored (release) after its last
/// copy retires.
///
/// step() may be called by any thread: it is guarded by a try-lock, so the
/// engine agent and owners polling for completion can all drive it.
class EngineGroup final : public Agent {
 public:
  EngineGroup(std::uint32_t id, const EngineConfig& config, const MemoryRegistry& memory, Clock& clock);

  std::uint32_t id() const { return id_; }
  const EngineConfig& config() const { return config_; }
  std::uint32_t wq_count() const { return static_cast<std::uint32_t>(wqs_.size()); }
  WorkQueue& wq(std::uint32_t i) { return *wqs_.at(i); }
  Clock& clock() { return clock_; }

  /// Pushes an item, charging the issue cost. The caller guarantees a slot.
  void submit(std::uint32_t wq_index, WorkItem* item);

  /// Synchronous, non-batched copy through `wq_index`; returns the final
  /// status. One caller per queue.
  CopyStatus sync_copy(std::uint32_t wq_index, RegionAddress dst, RegionAddress src, std::uint32_t len);

  /// Polls `item` to completion, helping the engine along.
  CopyStatus wait(const WorkItem& item);

  bool step() override;
  std::string name() const override { return "engine" + std::to_string(id_); }
  /// Deadline of the oldest copy in the pipeline.
  Timestamp next_event() const override;

  /// Records (wq, tag) of every copy entering the pipeline.
  void enable_trace(bool on) { trace_on_ = on; }
  std::vector<std::pair<std::uint32_t, std::uint64_t>> trace() const;

  std::uint64_t copies_executed() const { return copies_.load(std::memory_order_relaxed); }
  std::uint64_t items_executed() const { return items_.load(std::memory_order_relaxed); }
  std::uint64_t items_submitted() const { return submitted_.load(std::memory_order_relaxed); }

  bool idle() const;

 private:
  struct InFlight {
    WorkItem* item;
    Timestamp deadline;
  };

  bool fill(Timestamp now);
  bool retire(Timestamp now);

  const std::uint32_t id_;
  const EngineConfig config_;
  const MemoryRegistry& memory_;
  Clock& clock_;
  std::vector<std::unique_ptr<WorkQueue>> wqs_;

  mutable std::mutex mu_;
  std::deque<InFlight> pipeline_;
  WorkItem* current_ = nullptr;
  std::uint32_t current_wq_ = 0;
  std::uint32_t rr_ = 0;
  bool trace_on_ = false;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> trace_;

  std::vector<std::unique_ptr<WorkItem>> sync_items_;
  std::vector<CopyDescriptor> sync_descs_;

  std::atomic<std::uint64_t> copies_{0};
  std::atomic<std::uint64_t> items_{0};
  std::atomic<std::uint64_t> submitted_{0};
};

/// The set of engine groups of one device. Configured exactly once.
class CopyEngine {
 public:
  CopyEngine(const MemoryRegistry& memory, Clock& clock) : memory_(memory), clock_(clock) {}

  /// Creates n_groups groups. Throws std::logic_error if already configured.
  void configure(std::uint32_t n_groups, const EngineConfig& config);

  bool configured() const { return !groups_.empty(); }
  std::uint32_t size() const { return static_cast<std::uint32_t>(groups_.size()); }
  EngineGroup& group(std::uint32_t i) { return *groups_.at(i); }

 private:
  const MemoryRegistry& memory_;
  Clock& clock_;
  std::vector<std::unique_ptr<EngineGroup>> groups_;
};

/// Batch bookkeeping handed back to the owner of a context.
struct CompletedBatch {
  std::uint64_t seq = 0;
  std::uint32_t count = 0;
  CopyStatus status = CopyStatus::kDone;
  Timestamp issued_at = 0;
};

/// Per-agent handle for asynchronous, batched copy offloading.
///
/// Owns one work queue of a group. Copies accumulate into a pending batch
/// that is issued as one batch descriptor when it reaches `batch_size`, or
/// earlier via batch_issue_pending(). At most `num_desc` batches are in
/// flight; descriptor storage is preallocated here and reused. Batches are
/// numbered by `seq` in issue order and always retire in that order.
class OffloadContext {
 public:
  /// Throws std::invalid_argument on bad sizes and std::logic_error when the
  /// work queue already has an owner.
  OffloadContext(EngineGroup& group, std::uint32_t wq_index, std::uint32_t batch_size,
                 std::uint32_t num_desc);
  ~OffloadContext();

  OffloadContext(const OffloadContext&) = delete;
  OffloadContext& operator=(const OffloadContext&) = delete;

  /// Appends a copy; returns true if this append issued a full batch.
  /// Throws std::invalid_argument for a zero length.
  bool batch_issue_async(RegionAddress dst, RegionAddress src, std::uint32_t len);

  bool batch_should_issue_pending(Nanos s_timeout) const;
  /// Issues the pending copies as a (possibly short) batch; no-op if empty.
  void batch_issue_pending();

  bool batch_should_wait(Nanos c_timeout) const;
  /// Blocks until the oldest in-flight batch completes and returns it.
  /// Throws std::logic_error when nothing is in flight.
  CompletedBatch batch_wait_oldest();

  /// Non-blocking: appends the completed FIFO prefix of in-flight batches.
  std::size_t poll_completions(std::vector<CompletedBatch>& out);

  /// Sequence number the next appended copy will belong to.
  std::uint64_t pending_seq() const { return issued_seq_; }
  std::uint32_t pending_count() const { return pending_count_; }
  /// Issued batches whose completion has not been observed yet.
  std::uint32_t in_flight() const { return static_cast<std::uint32_t>(issued_seq_ - retired_seq_); }
  /// Completed batches observed internally but not yet handed back.
  std::size_t unreported() const { return reaped_.size(); }
  std::uint32_t batch_size() const { return batch_size_; }
  std::uint32_t num_desc() const { return num_desc_; }
  /// kNever when nothing is pending / in flight.
  Timestamp oldest_pending_append() const { return pending_count_ > 0 ? oldest_pending_append_ : kNever; }
  Timestamp oldest_in_flight_issue() const {
    return in_flight() > 0 ? slots_[retired_seq_ % slots_.size()].issued_at : kNever;
  }

  std::uint64_t batches_issued() const { return issued_seq_; }
  std::uint64_t copies_issued() const { return copies_issued_; }
  /// Wall time spent inside descriptor issue (includes synthetic cost).
  Nanos issue_time_ns() const { return issue_time_ns_; }

 private:
  struct Slot {
    std::unique_ptr<WorkItem> item;
    std::vector<CopyDescriptor> descs;
    Timestamp issued_at = 0;
  };

  Slot& slot(std::uint64_t seq) { return slots_[seq % slots_.size()]; }
  void issue(std::uint32_t count);
  CompletedBatch retire_front();

  EngineGroup& group_;
  std::uint32_t wq_index_;
  std::uint32_t batch_size_;
  std::uint32_t num_desc_;
  std::vector<Slot> slots_;

  std::uint32_t pending_count_ = 0;
  Timestamp oldest_pending_append_ = 0;
  std::uint64_t issued_seq_ = 0;   // batches issued so far; seq of the pending batch
  std::uint64_t retired_seq_ = 0;  // batches observed complete
  std::deque<CompletedBatch> reaped_;

  std::uint64_t copies_issued_ = 0;
  Nanos issue_time_ns_ = 0;
};

}  // namespace swarmemu
