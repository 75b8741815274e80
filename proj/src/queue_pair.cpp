#include "swarmemu/queue_pair.hpp"

#include <bit>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace swarmemu {

std::uint32_t doorbell_delta(std::uint32_t old_tail, std::uint32_t new_tail, std::uint32_t depth) {
  if (depth == 0 || old_tail >= depth || new_tail >= depth) {
    throw std::out_of_range("doorbell index outside ring: old=" + std::to_string(old_tail) +
                            " new=" + std::to_string(new_tail) + " depth=" + std::to_string(depth));
  }
  return (new_tail + depth - old_tail) % depth;
}

namespace nvme {
std::string hex_dump(std::span<const std::byte> entry) {
  std::string line;
  line.reserve(entry.size() * 3);
  char buf[4];
  for (std::size_t i = 0; i < entry.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", static_cast<unsigned>(entry[i]));
    if (i != 0) line.push_back(' ');
    line.append(buf, 2);
  }
  return line;
}
}  // namespace nvme

QueuePair::QueuePair(std::uint16_t qid, std::uint32_t depth)
    : qid_(qid),
      depth_(depth),
      mask_(depth - 1),
      memory_(std::size_t{depth} * (nvme::kSqeBytes + nvme::kCqeBytes)),
      trace_(depth) {
  if (depth < 2 || !std::has_single_bit(depth) || depth > 65536) {
    throw std::invalid_argument("queue depth must be a power of two in [2, 65536], got " +
                                std::to_string(depth));
  }
}

std::uint32_t QueuePair::sq_free() const {
  const std::uint32_t used = (sq_tail_ - submitter_head_) & mask_;
  return depth_ - 1 - used;
}

bool QueuePair::try_submit(std::span<const nvme::Command> entries) {
  if (entries.empty()) return true;
  if (entries.size() > sq_free()) return false;
  std::uint32_t tail = sq_tail_;
  for (const auto& cmd : entries) {
    nvme::encode(cmd, sq_slot(tail));
    tail = (tail + 1) & mask_;
  }
  sq_tail_ = tail;
  sq_tail_db_.store(tail, std::memory_order_release);
  ++doorbell_writes_;
  return true;
}

void QueuePair::submit(std::span<const nvme::Command> entries, const std::function<void()>& relax) {
  if (entries.size() > depth_ - 1) {
    throw std::invalid_argument("submission larger than ring capacity");
  }
  while (!try_submit(entries)) relax();
}

std::size_t QueuePair::consume_completions(std::size_t max, std::vector<nvme::Completion>& out) {
  std::size_t n = 0;
  while (n < max) {
    std::byte* slot = memory_.data() + sq_bytes() + std::size_t{cq_head_} * nvme::kCqeBytes;
    std::atomic_ref<std::uint16_t> status(*reinterpret_cast<std::uint16_t*>(slot + 14));
    const std::uint16_t word = status.load(std::memory_order_acquire);
    if (((word & 1u) != 0) != expected_phase_) break;
    nvme::Completion c = nvme::decode_completion(
        std::span<const std::byte, nvme::kCqeBytes>(slot, nvme::kCqeBytes));
    c.status = word;
    out.push_back(c);
    // Learn how far the device has fetched. Completions arrive out of order,
    // so only accept snapshots that move the head forward inside the window.
    const std::uint32_t snap = c.sq_head & mask_;
    if (((snap - submitter_head_) & mask_) <= ((sq_tail_ - submitter_head_) & mask_)) {
      submitter_head_ = snap;
    }
    cq_head_ = (cq_head_ + 1) & mask_;
    if (cq_head_ == 0) expected_phase_ = !expected_phase_;
    ++n;
  }
  if (n > 0) cq_head_db_.store(cq_head_, std::memory_order_release);
  return n;
}

std::uint32_t QueuePair::pending() const {
  return doorbell_delta(sq_head_, sq_tail_db_.load(std::memory_order_acquire), depth_);
}

std::uint32_t QueuePair::unfetched() const {
  return (sq_tail_db_.load(std::memory_order_acquire) - sq_head_pub_.load(std::memory_order_acquire)) & mask_;
}

FetchPlan QueuePair::plan_fetch(std::uint32_t n) const {
  FetchPlan plan;
  plan.entries = n;
  if (n == 0) return plan;
  const std::uint32_t first = std::min(n, depth_ - sq_head_);
  plan.segments[0] = {sq_head_, static_cast<std::uint32_t>(first * nvme::kSqeBytes)};
  plan.count = 1;
  if (first < n) {
    plan.segments[1] = {0, static_cast<std::uint32_t>((n - first) * nvme::kSqeBytes)};
    plan.count = 2;
  }
  return plan;
}

FetchPlan QueuePair::fetch_coalesced(std::uint32_t n, FetchBuffer& dst, const CopyFn& copy) {
  if (n > depth_ || n > dst.depth()) throw std::out_of_range("fetch larger than ring");
  const FetchPlan plan = plan_fetch(n);
  std::size_t dst_off = 0;
  for (const auto& seg : plan.view()) {
    copy(std::size_t{seg.slot} * nvme::kSqeBytes, dst_off, seg.bytes);
    dst_off += seg.bytes;
  }
  sq_head_ = (sq_head_ + n) & mask_;
  sq_head_pub_.store(sq_head_, std::memory_order_release);
  return plan;
}

std::uint32_t QueuePair::fetch_per_entry(std::uint32_t n, FetchBuffer& dst, const CopyFn& copy) {
  if (n > depth_ || n > dst.depth()) throw std::out_of_range("fetch larger than ring");
  for (std::uint32_t i = 0; i < n; ++i) {
    copy(std::size_t{sq_head_} * nvme::kSqeBytes, std::size_t{i} * nvme::kSqeBytes, nvme::kSqeBytes);
    sq_head_ = (sq_head_ + 1) & mask_;
  }
  sq_head_pub_.store(sq_head_, std::memory_order_release);
  return n;
}

void QueuePair::post_completion(std::uint16_t cid, std::uint16_t sq_head_snapshot, nvme::Status status) {
  const std::uint32_t next = (cq_tail_ + 1) & mask_;
  if (next == cq_head_db_.load(std::memory_order_acquire)) {
    // Outstanding commands never exceed depth - 1, so this is a protocol bug.
    throw std::logic_error("completion queue overflow on qid " + std::to_string(qid_));
  }
  std::byte* slot = cq_slot(cq_tail_);
  nvme::Completion c{sq_head_snapshot, qid_, cid, 0};
  std::array<std::byte, nvme::kCqeBytes> staged{};
  nvme::encode(c, std::span<std::byte, nvme::kCqeBytes>(staged));
  std::memcpy(slot, staged.data(), 14);
  std::atomic_ref<std::uint16_t> word(*reinterpret_cast<std::uint16_t*>(slot + 14));
  word.store(nvme::make_status(status, producer_phase_), std::memory_order_release);
  cq_tail_ = next;
  if (cq_tail_ == 0) producer_phase_ = !producer_phase_;
}

std::uint32_t QueuePair::cq_occupancy() const {
  return (cq_tail_ - cq_head_db_.load(std::memory_order_acquire)) & mask_;
}

void QueuePair::dump_sq(std::ostream& os) const {
  for (std::uint32_t i = 0; i < depth_; ++i) {
    os << nvme::hex_dump({memory_.data() + std::size_t{i} * nvme::kSqeBytes, nvme::kSqeBytes}) << '\n';
  }
}

void QueuePair::dump_cq(std::ostream& os) const {
  for (std::uint32_t i = 0; i < depth_; ++i) {
    os << nvme::hex_dump({memory_.data() + sq_bytes() + std::size_t{i} * nvme::kCqeBytes,
                          nvme::kCqeBytes})
       << '\n';
  }
}

}  // namespace swarmemu
