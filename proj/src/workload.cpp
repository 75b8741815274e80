#include "swarmemu/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>

#include "swarmemu/pattern.hpp"

namespace swarmemu {

// ---- LbaGenerator ---------------------------------------------------------

namespace {
std::shared_ptr<const std::vector<double>> zipf_cdf(std::uint64_t n, double theta) {
  // Shared across generators with identical parameters.
  static std::mutex mu;
  static std::map<std::pair<std::uint64_t, double>, std::shared_ptr<const std::vector<double>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{n, theta}];
  if (!slot) {
    auto cdf = std::make_shared<std::vector<double>>(n);
    double sum = 0;
    for (std::uint64_t k = 0; k < n; ++k) {
      sum += 1.0 / std::pow(static_cast<double>(k + 1), theta);
      (*cdf)[k] = sum;
    }
    for (auto& v : *cdf) v /= sum;
    slot = cdf;
  }
  return slot;
}
}  // namespace

LbaGenerator::LbaGenerator(LbaDistribution dist, double theta, std::uint64_t capacity_blocks,
                           std::uint32_t blocks_per_io, std::uint64_t seed)
    : dist_(dist), slots_(capacity_blocks / blocks_per_io), blocks_(blocks_per_io), seed_(seed), rng_(seed) {
  if (slots_ == 0) throw std::invalid_argument("I/O size exceeds device capacity");
  if (dist_ == LbaDistribution::kZipf) cdf_ = zipf_cdf(std::min<std::uint64_t>(slots_, 1u << 22), theta);
}

std::uint64_t LbaGenerator::next() {
  if (dist_ == LbaDistribution::kUniform) return (rng_() % slots_) * blocks_;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const auto rank = static_cast<std::uint64_t>(std::lower_bound(cdf_->begin(), cdf_->end(), u) - cdf_->begin());
  return (keyed_hash(seed_, rank) % slots_) * blocks_;
}

// ---- QpClient -------------------------------------------------------------

ClientStats& ClientStats::operator+=(const ClientStats& o) {
  submitted += o.submitted;
  completed += o.completed;
  doorbells += o.doorbells;
  verify_failures += o.verify_failures;
  cid_violations += o.cid_violations;
  status_errors += o.status_errors;
  early_completions += o.early_completions;
  return *this;
}

QpClient::QpClient(Device& device, QueuePair& qp, std::uint32_t slots, std::uint32_t io_bytes, bool verify)
    : qp_(qp),
      slots_(slots),
      io_bytes_(io_bytes),
      block_bytes_(device.config().block_bytes),
      seed_(device.config().pattern_seed),
      verify_(verify),
      data_(std::size_t{slots} * io_bytes),
      outstanding_(slots, 0),
      slba_(slots, 0),
      submit_time_(slots, 0) {
  if (slots == 0 || slots >= qp.depth()) throw std::invalid_argument("CID slots must be in [1, depth - 1]");
  base_addr_ = device.register_host_region(data_.span(), "qp" + std::to_string(qp.qid()) + ".data");
  free_.reserve(slots);
  for (std::uint32_t c = slots; c-- > 0;) free_.push_back(static_cast<std::uint16_t>(c));
}

std::uint16_t QpClient::stage(std::uint64_t slba, std::vector<nvme::Command>& out) {
  if (free_.empty()) throw std::logic_error("no free CID");
  const std::uint16_t cid = free_.back();
  free_.pop_back();
  nvme::Command cmd;
  cmd.opcode = nvme::kOpcodeRead;
  cmd.cid = cid;
  cmd.nsid = nvme::kNamespaceId;
  cmd.data_ptr = base_addr_ + std::uint64_t{cid} * io_bytes_;
  cmd.slba = slba;
  cmd.nlb = static_cast<std::uint16_t>(io_bytes_ / block_bytes_ - 1);
  out.push_back(cmd);
  slba_[cid] = slba;
  outstanding_[cid] = 1;
  return cid;
}

void QpClient::submit(std::vector<nvme::Command>& staged, Timestamp now) {
  if (staged.empty()) return;
  if (!qp_.try_submit(staged)) throw std::logic_error("submission queue full after can_submit()");
  for (const auto& cmd : staged) submit_time_[cmd.cid] = now;
  stats_.submitted += staged.size();
  ++stats_.doorbells;
  staged.clear();
}

bool QpClient::accept(const nvme::Completion& c, Timestamp now, SampleBuffer& samples) {
  if (c.cid >= slots_ || outstanding_[c.cid] == 0) {
    ++stats_.cid_violations;
    return false;
  }
  outstanding_[c.cid] = 0;
  ++stats_.completed;
  const TraceSlot* t = qp_.trace(c.cid);
  if (!c.ok()) {
    ++stats_.status_errors;
  } else {
    if (t != nullptr && t->posted < t->target) ++stats_.early_completions;
    if (verify_) {
      const auto buf = data_.span().subspan(std::size_t{c.cid} * io_bytes_, io_bytes_);
      if (!verify_read(buf, slba_[c.cid], io_bytes_ / block_bytes_ - 1, seed_, block_bytes_).ok) {
        ++stats_.verify_failures;
      }
    }
  }
  Sample s;
  s.observed = now;
  s.qid = qp_.qid();
  s.e2e = now - submit_time_[c.cid];
  if (t != nullptr) {
    s.target = t->target - t->fetch;
    s.proc = t->posted - t->fetch;
  }
  samples.record(s);
  return true;
}

// ---- agents ---------------------------------------------------------------

std::uint64_t SubmitBudget::take(std::uint64_t n) {
  if (limit_ == 0) return n;
  std::uint64_t used = used_.load(std::memory_order_relaxed);
  while (used < limit_) {
    const std::uint64_t grant = std::min(n, limit_ - used);
    if (used_.compare_exchange_weak(used, used + grant, std::memory_order_acq_rel)) return grant;
  }
  return 0;
}

std::uint64_t SubmitterAgent::outstanding() const {
  std::uint64_t n = 0;
  for (const QpClient* c : clients_) n += c->outstanding();
  return n;
}

QueueParallelAgent::QueueParallelAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients,
                                       SubmitBudget& budget, std::uint32_t poll_batch, std::uint32_t qdepth,
                                       LbaGenerator lba, double offered_iops, std::uint64_t seed)
    : SubmitterAgent(id, clock, std::move(clients), budget, poll_batch),
      qdepth_(qdepth),
      lba_(std::move(lba)),
      rate_per_ns_(offered_iops / 1e9),
      rng_(seed),
      gap_(offered_iops > 0 ? offered_iops / 1e9 : 1.0) {}

Timestamp QueueParallelAgent::next_event() const {
  if (rate_per_ns_ <= 0 || stopped()) return kNever;
  return arrivals_started_ ? next_arrival_ : 0;
}

bool QueueParallelAgent::submit_one(QpClient& c) {
  if (c.outstanding() >= qdepth_ || !c.can_submit(1)) return false;
  if (budget_.take(1) == 0) return false;
  c.stage(lba_.next(), staged_);
  c.submit(staged_, clock_.now());
  return true;
}

bool QueueParallelAgent::step() {
  bool progress = false;
  const Timestamp now = clock_.now();
  for (QpClient* c : clients_) progress |= c->poll(poll_batch_, now, samples_) > 0;
  if (stopped()) return progress;

  if (rate_per_ns_ <= 0) {
    for (QpClient* c : clients_) {
      while (submit_one(*c)) progress = true;
    }
    return progress;
  }
  if (!arrivals_started_) {
    next_arrival_ = now + static_cast<Timestamp>(gap_(rng_));
    arrivals_started_ = true;
  }
  while (next_arrival_ <= now) {
    // An arrival waits while every queue pair is at qdepth.
    bool placed = false;
    for (std::size_t k = 0; k < clients_.size() && !placed; ++k) {
      placed = submit_one(*clients_[(rr_ + k) % clients_.size()]);
    }
    if (!placed) break;
    rr_ = (rr_ + 1) % clients_.size();
    next_arrival_ += std::max<Timestamp>(1, static_cast<Timestamp>(gap_(rng_)));
    progress = true;
  }
  return progress;
}

WarpCoalescedAgent::WarpCoalescedAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients,
                                       SubmitBudget& budget, std::uint32_t poll_batch,
                                       std::vector<std::uint32_t> warp_qp, std::vector<std::uint32_t> warp_threads,
                                       LbaGenerator lba)
    : SubmitterAgent(id, clock, std::move(clients), budget, poll_batch),
      warp_qp_(std::move(warp_qp)),
      warp_threads_(std::move(warp_threads)),
      warp_pending_(warp_qp_.size(), 0),
      ready_(clients_.size()),
      warp_of_cid_(clients_.size()),
      lba_(std::move(lba)) {
  for (std::size_t c = 0; c < clients_.size(); ++c) warp_of_cid_[c].assign(clients_[c]->slots(), 0);
  for (std::uint32_t w = 0; w < warp_qp_.size(); ++w) ready_[warp_qp_[w]].push_back(w);
}

bool WarpCoalescedAgent::step() {
  bool progress = false;
  const Timestamp now = clock_.now();
  for (std::size_t c = 0; c < clients_.size(); ++c) {
    auto& owner = warp_of_cid_[c];
    auto on_done = [&](std::uint16_t cid, bool, std::span<const std::byte>) {
      const std::uint32_t w = owner[cid];
      if (--warp_pending_[w] == 0) ready_[c].push_back(w);
    };
    progress |= clients_[c]->poll(poll_batch_, now, samples_, on_done) > 0;
  }
  if (stopped()) return progress;
  for (std::size_t c = 0; c < clients_.size(); ++c) {
    QpClient& client = *clients_[c];
    while (!ready_[c].empty()) {
      const std::uint32_t w = ready_[c].front();
      const std::uint32_t n = warp_threads_[w];
      if (!client.can_submit(n)) break;
      const auto granted = static_cast<std::uint32_t>(budget_.take(n));
      if (granted == 0) return progress;
      for (std::uint32_t t = 0; t < granted; ++t) warp_of_cid_[c][client.stage(lba_.next(), staged_)] = w;
      client.submit(staged_, now);
      warp_pending_[w] = granted;
      ready_[c].pop_front();
      progress = true;
    }
  }
  return progress;
}

BeamSearchAgent::BeamSearchAgent(std::uint32_t id, Clock& clock, std::vector<QpClient*> clients,
                                 SubmitBudget& budget, std::uint32_t poll_batch, BeamConfig beam)
    : SubmitterAgent(id, clock, std::move(clients), budget, poll_batch),
      beam_(std::move(beam)),
      iterations_(beam_.iterations_for(beam_.width)),
      queries_(beam_.batch),
      inflight_(clients_.size()) {
  for (std::size_t c = 0; c < clients_.size(); ++c) inflight_[c].resize(clients_[c]->slots());
}

std::uint64_t BeamSearchAgent::outstanding() const { return SubmitterAgent::outstanding(); }

void BeamSearchAgent::start_batch() {
  for (std::uint32_t q = 0; q < beam_.batch; ++q) {
    Query& query = queries_[q];
    query.key = keyed_hash(beam_.seed, next_query_++, 0x51);
    query.visited.clear();
    query.candidates.clear();
    query.frontier.clear();
    for (std::uint32_t k = 0; query.frontier.size() < beam_.width && k < 4 * beam_.width; ++k) {
      const std::uint64_t node = keyed_hash(query.key, k, 0x5EED) % beam_.n_nodes;
      if (query.visited.insert(node).second) query.frontier.push_back(node);
    }
  }
  iteration_ = 0;
  batch_active_ = true;
  for (std::uint32_t q = 0; q < beam_.batch; ++q) {
    for (std::uint64_t node : queries_[q].frontier) to_issue_.push_back({q, node});
  }
  reads_left_ = to_issue_.size();
}

void BeamSearchAgent::advance_iteration() {
  ++iteration_;
  if (iteration_ >= iterations_) {
    const Timestamp now = clock_.now();
    for (std::uint32_t q = 0; q < beam_.batch; ++q) done_times_.push_back(now);
    batch_active_ = false;
    return;
  }
  for (std::uint32_t q = 0; q < beam_.batch; ++q) {
    Query& query = queries_[q];
    auto& cand = query.candidates;
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    cand.erase(std::remove_if(cand.begin(), cand.end(), [&](std::uint64_t n) { return query.visited.count(n) > 0; }),
               cand.end());
    // Lower keyed hash = closer to the query.
    auto closer = [&](std::uint64_t a, std::uint64_t b) {
      const std::uint64_t ha = keyed_hash(query.key, a);
      const std::uint64_t hb = keyed_hash(query.key, b);
      return ha != hb ? ha < hb : a < b;
    };
    const std::size_t keep = std::min<std::size_t>(beam_.width, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), closer);
    query.frontier.assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep));
    cand.clear();
    for (std::uint64_t node : query.frontier) {
      query.visited.insert(node);
      to_issue_.push_back({q, node});
    }
  }
  reads_left_ = to_issue_.size();
  if (reads_left_ == 0) advance_iteration();
}

bool BeamSearchAgent::step() {
  bool progress = false;
  const Timestamp now = clock_.now();
  for (std::size_t c = 0; c < clients_.size(); ++c) {
    auto on_done = [&](std::uint16_t cid, bool ok, std::span<const std::byte> data) {
      const Read r = inflight_[c][cid];
      digest_ = mix64(digest_ ^ (r.node * 0x9E3779B97F4A7C15ull + r.query));
      if (ok) {
        Query& query = queries_[r.query];
        for (std::uint32_t k = 0; k < beam_.degree; ++k) {
          std::uint64_t word;
          std::memcpy(&word, data.data() + std::size_t{k} * 8, 8);
          query.candidates.push_back(word % beam_.n_nodes);
        }
      }
      --reads_left_;
    };
    progress |= clients_[c]->poll(poll_batch_, now, samples_, on_done) > 0;
  }
  // A stopped search abandons its current batch once in-flight reads land.
  if (stopped()) return progress;
  if (batch_active_ && reads_left_ == 0 && to_issue_.empty()) {
    advance_iteration();
    progress = true;
  }
  if (!batch_active_) {
    start_batch();
    progress = true;
  }
  // Issue pending reads, one doorbell per queue pair per step.
  for (std::size_t k = 0; k < clients_.size() && !to_issue_.empty(); ++k) {
    const std::size_t c = (rr_ + k) % clients_.size();
    QpClient& client = *clients_[c];
    const std::size_t share = (to_issue_.size() + clients_.size() - k - 1) / (clients_.size() - k);
    std::uint32_t n = 0;
    while (n < share && !to_issue_.empty() && client.can_submit(n + 1)) {
      const Read r = to_issue_.front();
      to_issue_.pop_front();
      const std::uint16_t cid = client.stage(r.node, staged_);
      inflight_[c][cid] = r;
      ++n;
    }
    if (n > 0) {
      budget_.take(n);
      client.submit(staged_, now);
      progress = true;
    }
  }
  rr_ = (rr_ + 1) % clients_.size();
  return progress;
}

// ---- Workload -------------------------------------------------------------

std::vector<std::uint32_t> workload_queue_pairs(const WorkloadSpec& spec, const DeviceConfig& device) {
  std::vector<std::uint32_t> qps;
  for (std::uint32_t q = 0; q < device.n_queue_pairs; ++q) {
    if (spec.skew_units != 0 && q % device.n_service_units >= spec.skew_units) continue;
    qps.push_back(q);
  }
  if (spec.n_queue_pairs != 0 && qps.size() > spec.n_queue_pairs) qps.resize(spec.n_queue_pairs);
  return qps;
}

Workload::Workload(const WorkloadSpec& spec, Device& device) : spec_(spec), budget_(spec.total_ops) {
  const DeviceConfig& dc = device.config();
  spec_.validate(dc);
  if (device.started()) throw std::logic_error("workload must be built before the device starts");
  std::vector<std::uint32_t> qps = workload_queue_pairs(spec_, dc);
  if (qps.empty()) throw ConfigError("workload selects no queue pairs");
  const std::uint32_t depth = dc.queue_depth;
  const std::uint32_t blocks = spec_.io_bytes / dc.block_bytes;
  Clock& clock = device.clock();

  auto agent_count = [&](std::size_t n_qps) {
    const std::uint32_t want = spec_.agents != 0 ? spec_.agents : 16;
    return static_cast<std::uint32_t>(std::min<std::size_t>(want, n_qps));
  };
  auto lba = [&](std::uint32_t agent) {
    return LbaGenerator(spec_.lba_distribution, spec_.zipf_theta, dc.capacity_blocks, blocks,
                        keyed_hash(spec_.seed, agent, 0x1BA));
  };

  switch (spec_.kind) {
    case WorkloadKind::kQueueParallel: {
      if (qps.size() > spec_.n_submitters) qps.resize(spec_.n_submitters);
      for (std::uint32_t q : qps) {
        clients_.push_back(std::make_unique<QpClient>(device, device.queue_pair(q), spec_.qdepth, spec_.io_bytes,
                                                      spec_.verify));
      }
      const std::uint32_t n_agents = agent_count(clients_.size());
      for (std::uint32_t a = 0; a < n_agents; ++a) {
        std::vector<QpClient*> mine;
        for (std::size_t c = a; c < clients_.size(); c += n_agents) mine.push_back(clients_[c].get());
        agents_.push_back(std::make_unique<QueueParallelAgent>(
            a, clock, std::move(mine), budget_, spec_.cqe_poll_batch, spec_.qdepth, lba(a),
            spec_.offered_iops / n_agents, keyed_hash(spec_.seed, a, 0xA221)));
      }
      break;
    }
    case WorkloadKind::kWarpCoalesced: {
      if (depth <= nvme::kSqeBytes / 2) throw ConfigError("warp workload needs queue_depth > 32");
      const std::uint32_t n_warps = (spec_.n_submitters + 31) / 32;
      std::vector<std::uint32_t> warps_on(qps.size(), 0);
      for (std::uint32_t w = 0; w < n_warps; ++w) ++warps_on[w % qps.size()];
      const std::uint32_t max_slots = (depth - 1) / 32 * 32;
      for (std::size_t i = 0; i < qps.size(); ++i) {
        const std::uint32_t slots = std::clamp<std::uint32_t>(warps_on[i] * 32, 32, max_slots);
        clients_.push_back(
            std::make_unique<QpClient>(device, device.queue_pair(qps[i]), slots, spec_.io_bytes, spec_.verify));
      }
      const std::uint32_t n_agents = agent_count(clients_.size());
      for (std::uint32_t a = 0; a < n_agents; ++a) {
        std::vector<QpClient*> mine;
        std::vector<std::size_t> global_index;
        for (std::size_t c = a; c < clients_.size(); c += n_agents) {
          mine.push_back(clients_[c].get());
          global_index.push_back(c);
        }
        std::vector<std::uint32_t> warp_qp, warp_threads;
        for (std::uint32_t w = 0; w < n_warps; ++w) {
          const std::size_t c = w % clients_.size();
          if (c % n_agents != a) continue;
          warp_qp.push_back(static_cast<std::uint32_t>(c / n_agents));
          warp_threads.push_back(std::min<std::uint32_t>(32, spec_.n_submitters - w * 32));
        }
        agents_.push_back(std::make_unique<WarpCoalescedAgent>(a, clock, std::move(mine), budget_,
                                                               spec_.cqe_poll_batch, std::move(warp_qp),
                                                               std::move(warp_threads), lba(a)));
      }
      break;
    }
    case WorkloadKind::kBeamSearch: {
      const std::uint64_t reads = std::uint64_t{spec_.beam.batch} * spec_.beam.width;
      const auto per_qp = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(depth - 1, (reads + qps.size() - 1) / qps.size() + 1));
      std::vector<QpClient*> all;
      for (std::uint32_t q : qps) {
        clients_.push_back(
            std::make_unique<QpClient>(device, device.queue_pair(q), per_qp, dc.block_bytes, spec_.verify));
        all.push_back(clients_.back().get());
      }
      // Queries follow the workload seed; the graph itself is fixed by the store.
      BeamConfig beam = spec_.beam;
      beam.seed = keyed_hash(beam.seed, spec_.seed, 0xBEA);
      agents_.push_back(
          std::make_unique<BeamSearchAgent>(0, clock, std::move(all), budget_, spec_.cqe_poll_batch, beam));
      break;
    }
  }
}

std::vector<Agent*> Workload::agents() {
  std::vector<Agent*> out;
  for (auto& a : agents_) out.push_back(a.get());
  return out;
}

void Workload::stop_submitting() {
  for (auto& a : agents_) a->stop_submitting();
}

bool Workload::drained() const {
  for (const auto& a : agents_) {
    if (a->outstanding() != 0) return false;
  }
  return true;
}

ClientStats Workload::totals() const {
  ClientStats t;
  for (const auto& c : clients_) t += c->stats();
  return t;
}

std::vector<const SampleBuffer*> Workload::sample_buffers() const {
  std::vector<const SampleBuffer*> out;
  for (const auto& a : agents_) out.push_back(&a->samples());
  return out;
}

std::uint64_t Workload::queries_between(Timestamp from, Timestamp to) const {
  std::uint64_t n = 0;
  for (const auto& a : agents_) {
    if (const auto* b = dynamic_cast<const BeamSearchAgent*>(a.get())) {
      for (Timestamp t : b->query_done_times()) n += (t >= from && t <= to) ? 1 : 0;
    }
  }
  return n;
}

std::uint64_t Workload::visit_digest() const {
  std::uint64_t d = 0;
  for (const auto& a : agents_) {
    if (const auto* b = dynamic_cast<const BeamSearchAgent*>(a.get())) d ^= b->visit_digest();
  }
  return d;
}

}  // namespace swarmemu
