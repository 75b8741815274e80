#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "swarmemu/clock.hpp"
#include "swarmemu/memory.hpp"
#include "swarmemu/nvme.hpp"
#include "swarmemu/spsc_ring.hpp"

namespace swarmemu {

/// (new - old) mod depth. Throws std::out_of_range for an index >= depth,
/// which can only come from a corrupted doorbell.
std::uint32_t doorbell_delta(std::uint32_t old_tail, std::uint32_t new_tail, std::uint32_t depth);

/// Contiguous byte range of the SQ ring covered by one fetch transfer.
struct FetchSegment {
  std::uint32_t slot = 0;   // first ring slot
  std::uint32_t bytes = 0;  // entries * 64

  friend bool operator==(const FetchSegment&, const FetchSegment&) = default;
};

/// At most two segments: two only when the fetched range wraps.
struct FetchPlan {
  std::array<FetchSegment, 2> segments{};
  std::uint32_t count = 0;
  std::uint32_t entries = 0;

  std::span<const FetchSegment> view() const { return {segments.data(), count}; }
};

/// Per-dispatcher staging area sized to one full SQ ring.
class FetchBuffer {
 public:
  explicit FetchBuffer(std::uint32_t depth) : depth_(depth), bytes_(std::size_t{depth} * nvme::kSqeBytes) {}

  std::span<std::byte> bytes() { return bytes_.span(); }
  std::span<const std::byte, nvme::kSqeBytes> entry(std::uint32_t i) const {
    return std::span<const std::byte, nvme::kSqeBytes>(bytes_.data() + std::size_t{i} * nvme::kSqeBytes,
                                                       nvme::kSqeBytes);
  }
  std::uint32_t depth() const { return depth_; }

 private:
  std::uint32_t depth_;
  Buffer bytes_;
};

/// Device-side timestamps exported per CID for latency accounting. Written
/// by the completing worker before the CQE is published, so a consumer that
/// observed the CQE reads a consistent slot.
struct TraceSlot {
  Timestamp fetch = 0;
  Timestamp target = 0;
  Timestamp copy_done = 0;
  Timestamp posted = 0;
};

/// NVMe-style I/O queue pair with software doorbells.
///
/// Role contract: one submitter writes SQ entries and the SQ tail doorbell;
/// one dispatcher reads them; one producer (at a time) posts CQ entries; one
/// consumer reads them and writes the CQ head doorbell. SQ and CQ rings share
/// one contiguous allocation.
class QueuePair {
 public:
  QueuePair(std::uint16_t qid, std::uint32_t depth);

  QueuePair(const QueuePair&) = delete;
  QueuePair& operator=(const QueuePair&) = delete;

  std::uint16_t qid() const { return qid_; }
  std::uint32_t depth() const { return depth_; }

  /// Whole contiguous allocation: SQ ring followed by CQ ring.
  std::span<std::byte> memory() { return memory_.span(); }
  std::span<std::byte> sq_ring() { return memory_.span().first(sq_bytes()); }
  std::span<std::byte> cq_ring() { return memory_.span().subspan(sq_bytes()); }
  std::size_t sq_bytes() const { return std::size_t{depth_} * nvme::kSqeBytes; }

  // ---- submitter side -------------------------------------------------

  /// Free SQ slots as seen by the submitter. The head is learned from the
  /// sq_head field of consumed CQEs, so the submitter and the CQ consumer
  /// must be the same agent for this to advance.
  std::uint32_t sq_free() const;

  /// Writes entries at consecutive tail slots and rings the doorbell once.
  /// Returns false without writing anything when fewer than entries.size()
  /// slots are free.
  bool try_submit(std::span<const nvme::Command> entries);

  /// Spins (calling `relax`) until the ring has room, then submits.
  void submit(std::span<const nvme::Command> entries, const std::function<void()>& relax);

  std::uint64_t doorbell_writes() const { return doorbell_writes_; }

  // ---- consumer side --------------------------------------------------

  /// Appends up to `max` new completions to `out`, rings the CQ head
  /// doorbell once if any were consumed. Returns the number consumed.
  std::size_t consume_completions(std::size_t max, std::vector<nvme::Completion>& out);

  // ---- device side ----------------------------------------------------

  std::uint32_t sq_tail_doorbell() const { return sq_tail_db_.load(std::memory_order_acquire); }
  std::uint32_t sq_head() const { return sq_head_; }

  /// Entries published but not yet fetched (dispatcher view).
  std::uint32_t pending() const;

  /// Same, but safe to call from any agent: uses the head mirror that the
  /// dispatcher publishes after every fetch.
  std::uint32_t unfetched() const;

  /// Plans a coalesced fetch of n entries starting at sq_head.
  FetchPlan plan_fetch(std::uint32_t n) const;

  /// Copies n entries into dst through `copy(src_byte_offset, dst_byte_offset,
  /// len)` using at most two transfers, then advances sq_head.
  using CopyFn = std::function<void(std::size_t src_off, std::size_t dst_off, std::size_t len)>;
  FetchPlan fetch_coalesced(std::uint32_t n, FetchBuffer& dst, const CopyFn& copy);

  /// Baseline fetch: one 64-byte transfer per entry.
  std::uint32_t fetch_per_entry(std::uint32_t n, FetchBuffer& dst, const CopyFn& copy);

  /// Writes a CQE at cq_tail with the producer phase. The status word is
  /// stored last with release ordering.
  void post_completion(std::uint16_t cid, std::uint16_t sq_head_snapshot, nvme::Status status);

  /// Posted-but-unconsumed CQ entries.
  std::uint32_t cq_occupancy() const;

  TraceSlot* trace(std::uint16_t cid) { return cid < trace_.size() ? &trace_[cid] : nullptr; }
  const TraceSlot* trace(std::uint16_t cid) const {
    return cid < trace_.size() ? &trace_[cid] : nullptr;
  }

  // ---- debugging ------------------------------------------------------

  void dump_sq(std::ostream& os) const;
  void dump_cq(std::ostream& os) const;

 private:
  std::span<std::byte, nvme::kSqeBytes> sq_slot(std::uint32_t i) {
    return std::span<std::byte, nvme::kSqeBytes>(memory_.data() + std::size_t{i} * nvme::kSqeBytes,
                                                 nvme::kSqeBytes);
  }
  std::byte* cq_slot(std::uint32_t i) {
    return memory_.data() + sq_bytes() + std::size_t{i} * nvme::kCqeBytes;
  }

  const std::uint16_t qid_;
  const std::uint32_t depth_;
  const std::uint32_t mask_;
  Buffer memory_;
  std::vector<TraceSlot> trace_;

  // submitter-private
  alignas(kCacheLine) std::uint32_t sq_tail_ = 0;
  std::uint32_t submitter_head_ = 0;
  std::uint64_t doorbell_writes_ = 0;

  // consumer-private
  std::uint32_t cq_head_ = 0;
  bool expected_phase_ = true;

  // device-private
  alignas(kCacheLine) std::uint32_t sq_head_ = 0;
  std::uint32_t cq_tail_ = 0;
  bool producer_phase_ = true;

  // shared doorbells
  alignas(kCacheLine) std::atomic<std::uint32_t> sq_tail_db_{0};
  alignas(kCacheLine) std::atomic<std::uint32_t> cq_head_db_{0};
  std::atomic<std::uint32_t> sq_head_pub_{0};
};

}  // namespace swarmemu
