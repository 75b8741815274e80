#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "swarmemu/agent.hpp"
#include "swarmemu/config.hpp"
#include "swarmemu/device.hpp"
#include "swarmemu/metrics.hpp"
#include "swarmemu/nvme.hpp"

namespace swarmemu {

/// Aligned random LBAs: uniform, or Zipf-ranked with ranks scattered over
/// the address space by a hash.
class LbaGenerator {
 public:
  LbaGenerator(LbaDistribution dist, double theta, std::uint64_t capacity_blocks, std::uint32_t blocks_per_io,
               std::uint64_t seed);

  std::uint64_t next();
  std::uint64_t slots() const { return slots_; }

 private:
  LbaDistribution dist_;
  std::uint64_t slots_;
  std::uint32_t blocks_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::shared_ptr<const std::vector<double>> cdf_;
};

struct ClientStats {
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t doorbells = 0;
  std::uint64_t verify_failures = 0;
  std::uint64_t cid_violations = 0;  // unknown, duplicate or unsolicited CIDs
  std::uint64_t status_errors = 0;
  std::uint64_t early_completions = 0;  // posted before target

  ClientStats& operator+=(const ClientStats& o);
};

/// Submitter/consumer side of one queue pair: CID allocation, per-CID data
/// buffers, completion bookkeeping and verification.
class QpClient {
 public:
  /// Allocates `slots` buffers of io_bytes and registers them with the
  /// device, so it must run before Device::start(). slots < queue depth.
  QpClient(Device& device, QueuePair& qp, std::uint32_t slots, std::uint32_t io_bytes, bool verify);

  QueuePair& qp() { return qp_; }
  std::uint32_t slots() const { return slots_; }
  std::uint32_t outstanding() const { return slots_ - static_cast<std::uint32_t>(free_.size()); }
  /// True if n commands can be submitted right now.
  bool can_submit(std::uint32_t n) const { return free_.size() >= n && qp_.sq_free() >= n; }

  /// Claims a CID and appends a read of [slba, slba + io blocks) to `out`.
  std::uint16_t stage(std::uint64_t slba, std::vector<nvme::Command>& out);
  /// Submits everything staged with one doorbell write. Precondition:
  /// can_submit(staged.size()) held when staging started.
  void submit(std::vector<nvme::Command>& staged, Timestamp now);

  /// Consumes up to `max` completions (0 = all). For each valid one calls
  /// on_done(cid, ok, data) before the buffer is recycled.
  template <typename F>
  std::size_t poll(std::size_t max, Timestamp now, SampleBuffer& samples, F&& on_done);
  std::size_t poll(std::size_t max, Timestamp now, SampleBuffer& samples) {
    return poll(max, now, samples, [](std::uint16_t, bool, std::span<const std::byte>) {});
  }

  const ClientStats& stats() const { return stats_; }

 private:
  bool accept(const nvme::Completion& c, Timestamp now, SampleBuffer& samples);
  std::span<std::byte> buffer(std::uint16_t cid) {
    return data_.span().subspan(std::size_t{cid} * io_bytes_, io_bytes_);
  }

  QueuePair& qp_;
  std::uint32_t slots_;
  std::uint32_t io_bytes_;
  std::uint32_t block_bytes_;
  std::uint64_t seed_;
  bool verify_;
  Buffer data_;
  std::uint64_t base_addr_;
  std::vector<std::uint16_t> free_;
  std::vector<std::uint8_t> outstanding_;
  std::vector<std::uint64_t> slba_;
  std::vector<Timestamp> submit_time_;
  std::vector<nvme::Completion> comps_;
  ClientStats stats_;
};

template <typename F>
std::size_t QpClient::poll(std::size_t max, Timestamp now, SampleBuffer& samples, F&& on_done) {
  comps_.clear();
  const std::size_t n = qp_.consume_completions(max == 0 ? SIZE_MAX : max, comps_);
  for (const auto& c : comps_) {
    if (!accept(c, now, samples)) continue;
    auto buf = buffer(c.cid);
    on_done(c.cid, c.ok(), std::span<const std::byte>(buf));
    // Poison so a stale buffer can never pass verification again.
    std::fill(buf.begin(), buf.end(), std::byte{0xA5});
    free_.push_back(c.cid);
  }
  return n;
}

/// Shared cap on the total number of submissions (0 = unlimited).
class SubmitBudget {
 public:
  explicit SubmitBudget(std::uint64_t limit) : limit_(limit) {}
  /// Reserves up to n submissions; returns how many were granted.
  std::uint64_t take(std::uint64_t n);
  bool exhausted() const { return limit_ != 0 && used_.load(std::memory_order_acquire) >= limit_; }

 private:
  std::uint64_t limit_;
  std::atomic<std::uint64_t> used_{0};
};

/// Base of all submitter agents.
class SubmitterAgent : public Agent {
 public:
  SubmitterAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients, SubmitBudget& budget,
                 std::uint32_t poll_batch)
      : id_(id), clock_(clock), clients_(std::move(clients)), budget_(budget), poll_batch_(poll_batch) {}

  void stop_submitting() { stopped_.store(true, std::memory_order_release); }
  bool stopped() const { return stopped_.load(std::memory_order_acquire); }
  virtual std::uint64_t outstanding() const;
  const SampleBuffer& samples() const { return samples_; }

 protected:
  std::uint32_t id_;
  Clock& clock_;
  std::vector<QpClient*> clients_;
  SubmitBudget& budget_;
  std::uint32_t poll_batch_;
  SampleBuffer samples_;
  std::atomic<bool> stopped_{false};
  std::vector<nvme::Command> staged_;
};

/// fio-like: each queue pair keeps `qdepth` single-entry submissions in
/// flight (closed loop), or requests arrive as a Poisson process of the
/// given rate, capped at qdepth outstanding per queue pair (open loop).
class QueueParallelAgent final : public SubmitterAgent {
 public:
  QueueParallelAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients, SubmitBudget& budget,
                     std::uint32_t poll_batch, std::uint32_t qdepth, LbaGenerator lba, double offered_iops,
                     std::uint64_t seed);

  bool step() override;
  std::string name() const override { return "fio" + std::to_string(id_); }
  Timestamp next_event() const override;

 private:
  bool submit_one(QpClient& c);

  std::uint32_t qdepth_;
  LbaGenerator lba_;
  double rate_per_ns_;
  std::mt19937_64 rng_;
  std::exponential_distribution<double> gap_;
  Timestamp next_arrival_ = 0;
  bool arrivals_started_ = false;
  std::size_t rr_ = 0;
};

/// GPU-style: logical threads in warps of 32; a warp submits its 32 reads
/// with one doorbell write, each thread waits for its own CID, and the warp
/// resubmits once all 32 have completed. Warps map round-robin to queue
/// pairs.
class WarpCoalescedAgent final : public SubmitterAgent {
 public:
  /// `warp_qp[k]` / `warp_threads[k]`: client index and thread count of the
  /// k-th warp owned by this agent.
  WarpCoalescedAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients, SubmitBudget& budget,
                     std::uint32_t poll_batch, std::vector<std::uint32_t> warp_qp,
                     std::vector<std::uint32_t> warp_threads, LbaGenerator lba);

  bool step() override;
  std::string name() const override { return "warp" + std::to_string(id_); }

 private:
  std::vector<std::uint32_t> warp_qp_;
  std::vector<std::uint32_t> warp_threads_;
  std::vector<std::uint32_t> warp_pending_;
  std::vector<std::deque<std::uint32_t>> ready_;           // per client: idle warps
  std::vector<std::vector<std::uint32_t>> warp_of_cid_;  // per client
  LbaGenerator lba_;
};

/// Dependent-read beam search over a synthetic graph stored one node per
/// block. Neighbors of a node are read from its block (first `degree` words
/// mod n_nodes), so each iteration's reads depend on the previous ones.
/// Queries run in batch-synchronous rounds of `batch`.
class BeamSearchAgent final : public SubmitterAgent {
 public:
  BeamSearchAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients, SubmitBudget& budget,
                  std::uint32_t poll_batch, BeamConfig beam);

  bool step() override;
  std::string name() const override { return "beam" + std::to_string(id_); }
  std::uint64_t outstanding() const override;

  /// Completion time of every finished query.
  const std::vector<Timestamp>& query_done_times() const { return done_times_; }
  /// Order-sensitive digest of every visited node.
  std::uint64_t visit_digest() const { return digest_; }

 private:
  struct Query {
    std::uint64_t key = 0;
    std::vector<std::uint64_t> frontier;
    std::vector<std::uint64_t> candidates;
    std::unordered_set<std::uint64_t> visited;
  };
  struct Read {
    std::uint32_t query;
    std::uint64_t node;
  };

  void start_batch();
  void advance_iteration();

  BeamConfig beam_;
  std::uint32_t iterations_;
  std::vector<Query> queries_;
  std::deque<Read> to_issue_;
  std::vector<std::vector<Read>> inflight_;  // per client, by cid
  std::uint64_t reads_left_ = 0;
  std::uint32_t iteration_ = 0;
  std::uint64_t next_query_ = 0;
  std::size_t rr_ = 0;
  bool batch_active_ = false;
  std::uint64_t digest_ = 0;
  std::vector<Timestamp> done_times_;
};

/// A configured workload bound to a device.
class Workload {
 public:
  /// Registers host buffers; call before Device::start().
  Workload(const WorkloadSpec& spec, Device& device);

  std::vector<Agent*> agents();
  void stop_submitting();
  bool budget_exhausted() const { return budget_.exhausted(); }
  /// Nothing outstanding on any client.
  bool drained() const;

  ClientStats totals() const;
  std::vector<const SampleBuffer*> sample_buffers() const;
  const std::vector<std::unique_ptr<QpClient>>& clients() const { return clients_; }

  /// Beam search: finished queries with completion time in [from, to].
  std::uint64_t queries_between(Timestamp from, Timestamp to) const;
  std::uint64_t visit_digest() const;

 private:
  WorkloadSpec spec_;
  SubmitBudget budget_;
  std::vector<std::unique_ptr<QpClient>> clients_;
  std::vector<std::unique_ptr<SubmitterAgent>> agents_;
};

/// Queue pairs a workload drives: the first n (0 = all), restricted to the
/// first `skew_units` units when nonzero.
std::vector<std::uint32_t> workload_queue_pairs(const WorkloadSpec& spec, const DeviceConfig& device);

}  // namespace swarmemu
