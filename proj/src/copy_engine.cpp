#include "swarmemu/copy_engine.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace swarmemu {

namespace {
constexpr std::uint32_t kMaxCopiesPerStep = 512;
}  // namespace

EngineGroup::EngineGroup(std::uint32_t id, const EngineConfig& config, const MemoryRegistry& memory,
                         Clock& clock)
    : id_(id), config_(config), memory_(memory), clock_(clock) {
  if (config.wqs_per_group == 0) throw std::invalid_argument("a group needs at least one work queue");
  if (config.wq_depth == 0) throw std::invalid_argument("work queue depth must be positive");
  if (config.pipeline_depth == 0) throw std::invalid_argument("pipeline depth must be positive");
  for (std::uint32_t i = 0; i < config.wqs_per_group; ++i) {
    wqs_.push_back(std::make_unique<WorkQueue>(config.wq_depth));
    sync_items_.push_back(std::make_unique<WorkItem>());
  }
  sync_descs_.resize(config.wqs_per_group);
}

void EngineGroup::submit(std::uint32_t wq_index, WorkItem* item) {
  clock_.spin_for(config_.issue_cost_ns);
  if (!wqs_.at(wq_index)->push(item)) {
    throw std::logic_error("work queue " + std::to_string(wq_index) + " of group " + std::to_string(id_) +
                           " overflowed; the owner must track its slots");
  }
  submitted_.fetch_add(1, std::memory_order_relaxed);
}

CopyStatus EngineGroup::wait(const WorkItem& item) {
  CopyStatus s;
  while ((s = item.load_status()) == CopyStatus::kPending) {
    if (!step()) clock_.relax();
  }
  return s;
}

CopyStatus EngineGroup::sync_copy(std::uint32_t wq_index, RegionAddress dst, RegionAddress src,
                                  std::uint32_t len) {
  WorkItem& item = *sync_items_.at(wq_index);
  sync_descs_[wq_index] = {src, dst, len};
  item.descs = &sync_descs_[wq_index];
  item.count = 1;
  item.started = 0;
  item.retired = 0;
  item.status = static_cast<std::uint8_t>(CopyStatus::kDone);
  item.completion.store(0, std::memory_order_relaxed);
  submit(wq_index, &item);
  return wait(item);
}

bool EngineGroup::retire(Timestamp now) {
  bool progress = false;
  while (!pipeline_.empty() && pipeline_.front().deadline <= now) {
    WorkItem* item = pipeline_.front().item;
    pipeline_.pop_front();
    copies_.fetch_add(1, std::memory_order_relaxed);
    if (++item->retired == item->count) {
      items_.fetch_add(1, std::memory_order_relaxed);
      item->completion.store(item->status, std::memory_order_release);
    }
    progress = true;
  }
  return progress;
}

bool EngineGroup::fill(Timestamp now) {
  bool progress = false;
  const auto n = static_cast<std::uint32_t>(wqs_.size());
  while (pipeline_.size() < config_.pipeline_depth) {
    if (current_ == nullptr || current_->started == current_->count) {
      current_ = nullptr;
      for (std::uint32_t k = 0; k < n; ++k) {
        const std::uint32_t idx = (rr_ + k) % n;
        WorkItem* item = nullptr;
        if (wqs_[idx]->pop(item)) {
          current_ = item;
          current_wq_ = idx;
          rr_ = (idx + 1) % n;
          break;
        }
      }
      if (current_ == nullptr) break;
    }
    const CopyDescriptor& d = current_->descs[current_->started++];
    const auto src = memory_.resolve(d.src, d.len);
    const auto dst = memory_.resolve(d.dst, d.len);
    if (d.len == 0 || src.empty() || dst.empty()) {
      current_->status = std::max<std::uint8_t>(current_->status, static_cast<std::uint8_t>(CopyStatus::kBadRange));
    } else {
      std::memmove(dst.data(), src.data(), d.len);
    }
    if (trace_on_) trace_.emplace_back(current_wq_, current_->tag * 65536 + (current_->started - 1));
    pipeline_.push_back({current_, now + config_.per_copy_cost_ns});
    progress = true;
  }
  return progress;
}

bool EngineGroup::step() {
  std::unique_lock lock(mu_, std::try_to_lock);
  if (!lock.owns_lock()) return false;
  bool progress = false;
  const std::uint64_t start = copies_.load(std::memory_order_relaxed);
  while (copies_.load(std::memory_order_relaxed) - start < kMaxCopiesPerStep) {
    const Timestamp now = clock_.now();
    bool p = retire(now);
    p |= fill(now);
    if (config_.per_copy_cost_ns == 0) p |= retire(now);
    if (!p) break;
    progress = true;
  }
  return progress;
}

Timestamp EngineGroup::next_event() const {
  std::unique_lock lock(mu_, std::try_to_lock);
  if (!lock.owns_lock() || pipeline_.empty()) return kNever;
  return pipeline_.front().deadline;
}

std::vector<std::pair<std::uint32_t, std::uint64_t>> EngineGroup::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

bool EngineGroup::idle() const {
  std::lock_guard lock(mu_);
  if (!pipeline_.empty() || (current_ != nullptr && current_->started < current_->count)) return false;
  return std::all_of(wqs_.begin(), wqs_.end(), [](const auto& wq) { return wq->size() == 0; });
}

void CopyEngine::configure(std::uint32_t n_groups, const EngineConfig& config) {
  if (configured()) throw std::logic_error("copy engine groups are already configured");
  if (n_groups == 0) throw std::invalid_argument("at least one engine group is required");
  for (std::uint32_t i = 0; i < n_groups; ++i) {
    groups_.push_back(std::make_unique<EngineGroup>(i, config, memory_, clock_));
  }
}

OffloadContext::OffloadContext(EngineGroup& group, std::uint32_t wq_index, std::uint32_t batch_size,
                               std::uint32_t num_desc)
    : group_(group), wq_index_(wq_index), batch_size_(batch_size), num_desc_(num_desc) {
  if (wq_index >= group.wq_count()) throw std::invalid_argument("no such work queue");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (num_desc < 1 || num_desc > group.wq(wq_index).depth()) {
    throw std::invalid_argument("num_desc must be in [1, work queue depth]");
  }
  if (!group.wq(wq_index).try_claim()) {
    throw std::logic_error("work queue " + std::to_string(wq_index) + " of group " +
                           std::to_string(group.id()) + " already has an owner");
  }
  // One spare slot so a batch can be built while num_desc are in flight.
  slots_.resize(std::size_t{num_desc} + 1);
  for (auto& s : slots_) {
    s.item = std::make_unique<WorkItem>();
    s.descs.resize(batch_size);
  }
}

OffloadContext::~OffloadContext() {
  while (in_flight() > 0) retire_front();
  group_.wq(wq_index_).release();
}

bool OffloadContext::batch_issue_async(RegionAddress dst, RegionAddress src, std::uint32_t len) {
  if (len == 0) throw std::invalid_argument("copy length must be positive");
  Slot& s = slot(issued_seq_);
  if (pending_count_ == 0) oldest_pending_append_ = group_.clock().now();
  s.descs[pending_count_++] = {src, dst, len};
  if (pending_count_ == batch_size_) {
    issue(pending_count_);
    return true;
  }
  return false;
}

bool OffloadContext::batch_should_issue_pending(Nanos s_timeout) const {
  return pending_count_ > 0 && group_.clock().now() - oldest_pending_append_ >= s_timeout;
}

void OffloadContext::batch_issue_pending() {
  if (pending_count_ > 0) issue(pending_count_);
}

bool OffloadContext::batch_should_wait(Nanos c_timeout) const {
  if (in_flight() == 0) return false;
  if (in_flight() >= num_desc_) return true;
  const Slot& oldest = slots_[retired_seq_ % slots_.size()];
  return group_.clock().now() - oldest.issued_at >= c_timeout;
}

void OffloadContext::issue(std::uint32_t count) {
  if (in_flight() >= num_desc_) reaped_.push_back(retire_front());
  Slot& s = slot(issued_seq_);
  WorkItem& item = *s.item;
  item.descs = s.descs.data();
  item.count = count;
  item.tag = issued_seq_;
  item.started = 0;
  item.retired = 0;
  item.status = static_cast<std::uint8_t>(CopyStatus::kDone);
  item.completion.store(0, std::memory_order_relaxed);
  Clock& clock = group_.clock();
  const Timestamp t0 = clock.now();
  s.issued_at = t0;
  group_.submit(wq_index_, &item);
  issue_time_ns_ += clock.now() - t0;
  ++issued_seq_;
  copies_issued_ += count;
  pending_count_ = 0;
}

CompletedBatch OffloadContext::retire_front() {
  const std::uint64_t seq = retired_seq_;
  Slot& s = slot(seq);
  const CopyStatus status = group_.wait(*s.item);
  ++retired_seq_;
  return {seq, s.item->count, status, s.issued_at};
}

CompletedBatch OffloadContext::batch_wait_oldest() {
  if (!reaped_.empty()) {
    CompletedBatch b = reaped_.front();
    reaped_.pop_front();
    return b;
  }
  if (in_flight() == 0) throw std::logic_error("no in-flight batch to wait for");
  return retire_front();
}

std::size_t OffloadContext::poll_completions(std::vector<CompletedBatch>& out) {
  std::size_t n = 0;
  while (!reaped_.empty()) {
    out.push_back(reaped_.front());
    reaped_.pop_front();
    ++n;
  }
  if (in_flight() > 0) group_.step();
  while (in_flight() > 0 && slot(retired_seq_).item->load_status() != CopyStatus::kPending) {
    out.push_back(retire_front());
    ++n;
  }
  return n;
}

}  // namespace swarmemu
