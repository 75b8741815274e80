#include <filesystem>
#include <fstream>
#include <cstring>
#include <set>

#include "doctest.h"
#include "swarmemu/device.hpp"
#include "swarmemu/experiment.hpp"
#include "swarmemu/pattern.hpp"
#include "swarmemu/runner.hpp"
#include "swarmemu/workload.hpp"

using namespace swarmemu;

namespace {

DeviceConfig small_device(std::uint32_t units = 1, std::uint32_t qps = 2) {
  DeviceConfig d;
  d.capacity_blocks = 4096;
  d.n_service_units = units;
  d.n_queue_pairs = qps;
  d.queue_depth = 256;
  d.local_queue_depth = 512;
  d.timing.t_max_iops = 1e5;  // sched 10 us on one instance
  d.timing.l_min_us = 50;
  d.timing.n_instances = 1;
  return d;
}

/// Host buffer of `slots` blocks registered with the device.
struct Host {
  Buffer data;
  std::uint64_t base;
  Host(Device& dev, std::size_t slots) : data(slots * 512), base(dev.register_host_region(data.span(), "host")) {}
};

std::vector<nvme::Command> reads(std::uint64_t base, std::uint32_t n, std::uint16_t first_cid = 0,
                                 std::uint64_t first_lba = 0) {
  std::vector<nvme::Command> v(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    v[i].cid = static_cast<std::uint16_t>(first_cid + i);
    v[i].slba = first_lba + i;
    v[i].data_ptr = base + std::uint64_t{first_cid + i} * 512;
  }
  return v;
}

std::vector<RequestRecord> drain_local(Worker& w) {
  std::vector<RequestRecord> out;
  RequestRecord r;
  while (w.local_queue().try_pop(r)) out.push_back(r);
  return out;
}

}  // namespace

TEST_CASE("queue pairs map to units by modulo") {
  VirtualClock clock;
  DeviceConfig d = small_device(16, 256);
  Device dev(d, clock);
  for (std::uint32_t q : {0u, 16u, 32u, 240u}) CHECK(dev.unit_of(q) == 0);
  CHECK(dev.unit_of(17) == 1);
  d.frontend_mode = FrontendMode::kCentralized;
  Device central(d, clock);
  CHECK(central.unit_of(17) == 0);
}

TEST_CASE("dispatcher: 64 new entries on one queue pair") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  Host host(dev, 256);
  dev.start();
  auto& unit = dev.units()[0];
  auto cmds = reads(host.base, 64);
  REQUIRE(dev.queue_pair(0).try_submit(cmds));
  CHECK(unit.dispatcher->iterate() == 64);
  CHECK(unit.dispatcher->fetch_transfers() == 1);
  const auto recs = drain_local(*unit.workers[0]);
  REQUIRE(recs.size() == 64);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].cid == i);
    CHECK(recs[i].fetch == 0);
    // One instance: back-to-back service 10 us apart after the 50 us floor.
    CHECK(recs[i].target == static_cast<Timestamp>(50'000 + 10'000 * i));
  }
  CHECK(dev.timing_model().guard_acquisitions() == 1);
}

TEST_CASE("dispatcher: idle queues leave the model untouched") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  dev.start();
  auto& unit = dev.units()[0];
  const auto before = dev.timing_model().availability();
  CHECK(unit.dispatcher->iterate() == 0);
  CHECK(dev.timing_model().availability() == before);
  CHECK(dev.timing_model().guard_acquisitions() == 0);
}

TEST_CASE("dispatcher: two queue pairs drained in one iteration, one batch each") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  Host host(dev, 256);
  dev.start();
  auto a = reads(host.base, 32, 0);
  auto b = reads(host.base, 32, 32);
  REQUIRE(dev.queue_pair(0).try_submit(a));
  REQUIRE(dev.queue_pair(1).try_submit(b));
  auto& unit = dev.units()[0];
  CHECK(unit.dispatcher->iterate() == 64);
  CHECK(unit.dispatcher->fetch_transfers() == 2);
  CHECK(dev.timing_model().guard_acquisitions() == 2);
}

TEST_CASE("dispatcher: per-entry fetch and per-request timing") {
  VirtualClock clock;
  DeviceConfig d = small_device();
  d.fetch_mode = FetchMode::kPerEntry;
  d.timing.mode = UpdateMode::kPerRequest;
  Device dev(d, clock);
  Host host(dev, 256);
  dev.start();
  auto cmds = reads(host.base, 10);
  REQUIRE(dev.queue_pair(0).try_submit(cmds));
  auto& unit = dev.units()[0];
  CHECK(unit.dispatcher->iterate() == 10);
  CHECK(unit.dispatcher->fetch_transfers() == 10);
  CHECK(dev.timing_model().guard_acquisitions() == 10);
}

TEST_CASE("decode errors complete with an error status and skip the model") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  Host host(dev, 8);
  dev.start();
  auto cmds = reads(host.base, 4);
  cmds[0].opcode = 0x01;           // write
  cmds[1].nsid = 9;                // unknown namespace
  cmds[2].slba = 4095;             // 2 blocks past the end
  cmds[2].nlb = 1;
  cmds[3].data_ptr = 0xDEAD0000;   // not a registered buffer
  REQUIRE(dev.queue_pair(0).try_submit(cmds));
  AgentRunner runner(clock);
  for (Agent* a : dev.agents()) runner.add(a);
  REQUIRE(dev.drain(runner, 1'000'000));
  std::vector<nvme::Completion> out;
  REQUIRE(dev.queue_pair(0).consume_completions(8, out) == 4);
  std::set<std::uint16_t> codes;
  for (const auto& c : out) codes.insert(c.status_code());
  CHECK(codes == std::set<std::uint16_t>{static_cast<std::uint16_t>(nvme::Status::kInvalidOpcode),
                                         static_cast<std::uint16_t>(nvme::Status::kInvalidNamespace),
                                         static_cast<std::uint16_t>(nvme::Status::kLbaOutOfRange),
                                         static_cast<std::uint16_t>(nvme::Status::kInvalidField)});
  CHECK(dev.timing_model().guard_acquisitions() == 0);
  const auto counters = dev.stop();
  CHECK(counters.errors == 4);
}

TEST_CASE("worker: 100 queued, max 64, batch 16") {
  VirtualClock clock;
  DeviceConfig d = small_device();
  d.max_copies_per_iteration = 64;
  d.copy_engine.batch_size = 16;
  Device dev(d, clock);
  Host host(dev, 128);
  dev.start();
  auto& w = *dev.units()[0].workers[0];
  for (std::uint16_t i = 0; i < 100; ++i) {
    RequestRecord r;
    r.cid = i;
    r.slba = i;
    r.data = {0, 0};
    REQUIRE(dev.host().translate(host.base + i * 512ull, 512, r.data));
    r.target = 1'000'000;
    REQUIRE(w.local_queue().try_push(r));
  }
  const auto first = w.iterate();
  CHECK(first.copies_issued == 64);
  CHECK(w.context()->batches_issued() == 4);
  CHECK(w.local_queue().size() == 36);
  CHECK(first.completions_posted == 0);
}

TEST_CASE("worker: copy done before target does not complete early") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  Host host(dev, 8);
  dev.start();
  auto cmds = reads(host.base, 1, 0, 42);
  REQUIRE(dev.queue_pair(0).try_submit(cmds));
  AgentRunner runner(clock);
  for (Agent* a : dev.agents()) runner.add(a);
  std::vector<nvme::Completion> out;
  runner.run_until([&] { return dev.queue_pair(0).cq_occupancy() > 0; }, 1'000'000);
  // The copy finishes within a few passes but the CQE waits for 50 us.
  CHECK(clock.global() >= 50'000);
  REQUIRE(dev.queue_pair(0).consume_completions(1, out) == 1);
  const TraceSlot* t = dev.queue_pair(0).trace(0);
  CHECK(t->posted >= t->target);
  CHECK(t->copy_done <= t->target);
  CHECK(t->target - t->fetch == 50'000);
  CHECK(verify_read(host.data.span().first(512), 42, 0, dev.config().pattern_seed, 512).ok);
}

TEST_CASE("worker: empty local queue yields nothing") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  dev.start();
  const auto r = dev.units()[0].workers[0]->iterate();
  CHECK(r.copies_issued == 0);
  CHECK(r.completions_posted == 0);
}

TEST_CASE("stop requires quiescence; configure errors surface") {
  VirtualClock clock;
  Device dev(small_device(), clock);
  Host host(dev, 8);
  dev.start();
  CHECK_THROWS(dev.register_host_region(host.data.span(), "late"));
  auto cmds = reads(host.base, 2);
  REQUIRE(dev.queue_pair(0).try_submit(cmds));
  CHECK_FALSE(dev.quiescent());
  CHECK_THROWS_AS(dev.stop(), std::logic_error);
  DeviceConfig bad = small_device();
  bad.queue_depth = 100;
  CHECK_THROWS_AS(Device(bad, clock), ConfigError);
}

// ---- end-to-end runs ----------------------------------------------------------

namespace {

RunConfig tiny_run(WorkloadKind kind) {
  RunConfig c;
  c.device.capacity_blocks = 8192;
  c.device.n_service_units = 2;
  c.device.n_queue_pairs = 8;
  c.device.queue_depth = 256;
  c.device.timing.t_max_iops = 100'000;
  c.device.timing.l_min_us = 50;
  c.device.timing.n_instances = 4;
  c.workload.kind = kind;
  c.workload.n_submitters = kind == WorkloadKind::kWarpCoalesced ? 256 : 8;
  c.workload.qdepth = 8;
  c.workload.duration_s = 0.05;
  c.workload.beam.n_nodes = 4096;
  c.workload.beam.batch = 8;
  return c;
}

}  // namespace

TEST_CASE("end-to-end runs keep the submission/completion bijection") {
  for (auto kind : {WorkloadKind::kQueueParallel, WorkloadKind::kWarpCoalesced, WorkloadKind::kBeamSearch}) {
    CAPTURE(to_string(kind));
    for (auto mode : {FrontendMode::kDistributed, FrontendMode::kCentralized}) {
      RunConfig c = tiny_run(kind);
      c.device.frontend_mode = mode;
      const RunResult r = run_experiment(c);
      CHECK(r.integrity.ok());
      for (const auto& p : r.integrity.problems) MESSAGE(p);
      CHECK(r.client.submitted > 0);
      CHECK(r.client.submitted == r.client.completed);
      CHECK(r.counters.posted == r.client.completed);
      CHECK(r.counters.early_posts == 0);
    }
  }
}

TEST_CASE("warp workload coalesces 32 submissions per doorbell") {
  RunConfig c = tiny_run(WorkloadKind::kWarpCoalesced);
  c.workload.n_submitters = 32;
  const RunResult r = run_experiment(c);
  CHECK(r.integrity.ok());
  CHECK(r.client.submitted == 32 * r.client.doorbells);
}

TEST_CASE("total_ops stops submission exactly") {
  RunConfig c = tiny_run(WorkloadKind::kQueueParallel);
  c.workload.duration_s = 0;
  c.workload.total_ops = 1234;
  const RunResult r = run_experiment(c);
  CHECK(r.client.submitted == 1234);
  CHECK(r.client.completed == 1234);
}

TEST_CASE("engine fetch path, per-entry fetch and per-request timing all complete") {
  RunConfig c = tiny_run(WorkloadKind::kQueueParallel);
  c.device.fetch_path = FetchPath::kEngine;
  c.device.fetch_mode = FetchMode::kPerEntry;
  c.device.timing.mode = UpdateMode::kPerRequest;
  c.device.workers_per_unit = 2;
  const RunResult r = run_experiment(c);
  CHECK(r.integrity.ok());
  CHECK(r.counters.fetch_transfers == r.counters.fetched);
}

TEST_CASE("virtual-clock runs are deterministic") {
  for (auto kind : {WorkloadKind::kQueueParallel, WorkloadKind::kBeamSearch}) {
    RunConfig c = tiny_run(kind);
    c.workload.seed = 42;
    RunResult a = run_experiment(c);
    RunResult b = run_experiment(c);
    CHECK(to_json(a.report).dump() == to_json(b.report).dump());
    CHECK(a.visit_digest == b.visit_digest);
    c.workload.seed = 43;
    RunResult other = run_experiment(c);
    if (kind == WorkloadKind::kBeamSearch) CHECK(other.visit_digest != a.visit_digest);
  }
}

TEST_CASE("beam batch 1 width 1 is a latency chain") {
  RunConfig c = tiny_run(WorkloadKind::kBeamSearch);
  c.device.timing.t_max_iops = 1e6;
  c.device.timing.n_instances = 1;
  c.workload.beam.batch = 1;
  c.workload.beam.width = 1;
  c.workload.beam.iterations = {{1, 10}};
  c.workload.duration_s = 0.2;
  const RunResult r = run_experiment(c);
  // One read at a time: QPS ~ 1 / (10 x 50 us) = 2000, minus pass overhead.
  CHECK(r.report.qps == doctest::Approx(2000).epsilon(0.05));
}

TEST_CASE("open-loop arrivals track the offered rate below capacity") {
  RunConfig c = tiny_run(WorkloadKind::kQueueParallel);
  c.workload.offered_iops = 20'000;
  c.workload.qdepth = 32;
  c.workload.duration_s = 0.5;
  const RunResult r = run_experiment(c);
  CHECK(r.integrity.ok());
  CHECK(r.report.iops == doctest::Approx(20'000).epsilon(0.05));
}

TEST_CASE("saturating closed loop reaches t_max") {
  RunConfig c = tiny_run(WorkloadKind::kWarpCoalesced);
  c.workload.n_submitters = 1024;
  c.workload.duration_s = 0.5;
  const RunResult r = run_experiment(c);
  CHECK(r.report.iops == doctest::Approx(100'000).epsilon(0.03));
}

TEST_CASE("local scope under skew caps at t_max / units") {
  RunConfig c = tiny_run(WorkloadKind::kWarpCoalesced);
  c.device.n_service_units = 4;
  c.workload.n_submitters = 1024;
  c.workload.duration_s = 0.5;
  const auto rows = ablation_skew(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].report.iops == doctest::Approx(100'000).epsilon(0.05));
  CHECK(rows[1].report.iops <= 1.2 * 100'000 / 4);
  CHECK(rows[0].report.iops >= rows[1].report.iops);
}

TEST_CASE("request trace dump") {
  RunConfig c = tiny_run(WorkloadKind::kQueueParallel);
  c.trace_path = (std::filesystem::temp_directory_path() / "swarmemu_trace.csv").string();
  const RunResult r = run_experiment(c);
  std::ifstream in(c.trace_path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == r.client.completed + 1);
  std::filesystem::remove(c.trace_path);
}
