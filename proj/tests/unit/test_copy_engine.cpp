#include <cstring>
#include <numeric>

#include "doctest.h"
#include "swarmemu/copy_engine.hpp"
#include "swarmemu/experiment.hpp"
#include "swarmemu/pattern.hpp"

using namespace swarmemu;

namespace {

struct Fixture {
  VirtualClock clock{100, 100};
  Buffer src{64 * 1024};
  Buffer dst{64 * 1024};
  MemoryRegistry reg;
  RegionId rs, rd;

  Fixture() {
    for (std::size_t b = 0; b < 128; ++b) fill_block(5, b, src.span().subspan(b * 512, 512));
    rs = reg.add(src.span(), "src");
    rd = reg.add(dst.span(), "dst");
  }
  EngineConfig config(std::uint32_t wqs = 2, Nanos per_copy = 0, std::uint32_t pipeline = 8) const {
    EngineConfig c;
    c.wqs_per_group = wqs;
    c.per_copy_cost_ns = per_copy;
    c.pipeline_depth = pipeline;
    return c;
  }
};

}  // namespace

TEST_CASE("group_configure creates wq_depth-sized queues per group") {
  Fixture f;
  CopyEngine engine(f.reg, f.clock);
  engine.configure(4, f.config());
  CHECK(engine.size() == 4);
  std::uint32_t wqs = 0;
  for (std::uint32_t g = 0; g < 4; ++g) {
    wqs += engine.group(g).wq_count();
    CHECK(engine.group(g).wq(0).depth() == 32);
  }
  CHECK(wqs == 8);
  CHECK_THROWS_AS(engine.configure(1, f.config()), std::logic_error);
}

TEST_CASE("ctx_init validates sizes and ownership") {
  Fixture f;
  EngineGroup g(0, f.config(), f.reg, f.clock);
  {
    OffloadContext ctx(g, 1, 16, 32);
    CHECK(ctx.batch_size() == 16);
    CHECK_THROWS_AS(OffloadContext(g, 1, 1, 1), std::logic_error);
  }
  // Released on destruction.
  CHECK_NOTHROW(OffloadContext(g, 1, 1, 1));
  CHECK_THROWS_AS(OffloadContext(g, 1, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(OffloadContext(g, 1, 1, 33), std::invalid_argument);
  CHECK_THROWS_AS(OffloadContext(g, 5, 1, 1), std::invalid_argument);
}

TEST_CASE("batch_issue_async threshold") {
  Fixture f;
  EngineGroup g(0, f.config(), f.reg, f.clock);
  OffloadContext ctx(g, 1, 16, 32);
  for (int i = 0; i < 15; ++i) CHECK_FALSE(ctx.batch_issue_async({f.rd, i * 512ull}, {f.rs, i * 512ull}, 512));
  CHECK(ctx.pending_count() == 15);
  CHECK(ctx.batch_issue_async({f.rd, 15 * 512ull}, {f.rs, 15 * 512ull}, 512));
  CHECK(ctx.batches_issued() == 1);
  CHECK(ctx.copies_issued() == 16);
  CHECK(ctx.pending_count() == 0);
  CHECK_THROWS_AS(ctx.batch_issue_async({f.rd, 0}, {f.rs, 0}, 0), std::invalid_argument);

  OffloadContext single(g, 0, 1, 4);
  CHECK(single.batch_issue_async({f.rd, 0}, {f.rs, 0}, 8));
  CHECK(single.batches_issued() == 1);
}

TEST_CASE("pending batches issue after s_timeout") {
  Fixture f;
  EngineGroup g(0, f.config(), f.reg, f.clock);
  OffloadContext ctx(g, 1, 16, 32);
  CHECK_FALSE(ctx.batch_should_issue_pending(1'000));
  for (int i = 0; i < 3; ++i) ctx.batch_issue_async({f.rd, i * 512ull}, {f.rs, i * 512ull}, 512);
  CHECK_FALSE(ctx.batch_should_issue_pending(1'000));
  CHECK(ctx.pending_count() == 3);
  f.clock.advance(1'000);
  CHECK(ctx.batch_should_issue_pending(1'000));
  ctx.batch_issue_pending();
  CHECK(ctx.batches_issued() == 1);
  CHECK(ctx.copies_issued() == 3);
  const auto b = ctx.batch_wait_oldest();
  CHECK(b.count == 3);
  CHECK(b.status == CopyStatus::kDone);
  CHECK(std::memcmp(f.src.data(), f.dst.data(), 3 * 512) == 0);
}

TEST_CASE("batches retire in issue order and should_wait tracks the budget") {
  Fixture f;
  EngineGroup g(0, f.config(2, 500), f.reg, f.clock);
  OffloadContext ctx(g, 1, 1, 2);
  CHECK_FALSE(ctx.batch_should_wait(10'000));
  ctx.batch_issue_async({f.rd, 0}, {f.rs, 0}, 512);
  CHECK_FALSE(ctx.batch_should_wait(10'000));
  ctx.batch_issue_async({f.rd, 512}, {f.rs, 512}, 512);
  CHECK(ctx.in_flight() == 2);
  CHECK(ctx.batch_should_wait(10'000));  // full budget, regardless of age
  const auto first = ctx.batch_wait_oldest();
  const auto second = ctx.batch_wait_oldest();
  CHECK(first.seq == 0);
  CHECK(second.seq == 1);
  CHECK_THROWS_AS(ctx.batch_wait_oldest(), std::logic_error);
}

TEST_CASE("in-flight age triggers should_wait after c_timeout") {
  Fixture f;
  EngineGroup g(0, f.config(2, 50'000), f.reg, f.clock);
  OffloadContext ctx(g, 1, 1, 8);
  ctx.batch_issue_async({f.rd, 0}, {f.rs, 0}, 512);
  CHECK_FALSE(ctx.batch_should_wait(10'000));
  f.clock.advance(10'000);
  CHECK(ctx.batch_should_wait(10'000));
}

TEST_CASE("poll_completions returns the completed FIFO prefix") {
  Fixture f;
  EngineGroup g(0, f.config(2, 1'000), f.reg, f.clock);
  OffloadContext ctx(g, 1, 1, 8);
  std::vector<CompletedBatch> out;
  CHECK(ctx.poll_completions(out) == 0);
  for (int i = 0; i < 3; ++i) ctx.batch_issue_async({f.rd, i * 512ull}, {f.rs, i * 512ull}, 512);
  g.step();
  CHECK(ctx.poll_completions(out) == 0);  // deadlines not reached
  f.clock.advance(1'000);
  CHECK(ctx.poll_completions(out) == 3);
  REQUIRE(out.size() == 3);
  for (std::uint64_t i = 0; i < 3; ++i) CHECK(out[i].seq == i);
}

TEST_CASE("out-of-range copies report an error status") {
  Fixture f;
  EngineGroup g(0, f.config(), f.reg, f.clock);
  OffloadContext ctx(g, 1, 2, 4);
  ctx.batch_issue_async({f.rd, 0}, {f.rs, 0}, 512);
  ctx.batch_issue_async({f.rd, 0}, {f.rs, 64 * 1024 - 10}, 512);  // src overruns
  const auto b = ctx.batch_wait_oldest();
  CHECK(is_error(b.status));
  CHECK(static_cast<int>(b.status) >= 2);
  CHECK(g.sync_copy(0, {f.rd, 0}, {99, 0}, 8) == CopyStatus::kBadRange);
}

TEST_CASE("sync_copy moves data before returning") {
  Fixture f;
  EngineGroup g(0, f.config(2, 300), f.reg, f.clock);
  CHECK(g.sync_copy(0, {f.rd, 0}, {f.rs, 0}, 4096) == CopyStatus::kDone);
  CHECK(std::memcmp(f.src.data(), f.dst.data(), 4096) == 0);
  CHECK(g.sync_copy(0, {f.rd, 5000}, {f.rs, 7}, 1) == CopyStatus::kDone);
  CHECK(f.dst.data()[5000] == f.src.data()[7]);
}

TEST_CASE("engine serves queues round-robin and FIFO within a queue") {
  Fixture f;
  EngineGroup g(0, f.config(3, 0, 1), f.reg, f.clock);
  g.enable_trace(true);
  OffloadContext a(g, 0, 1, 8), b(g, 1, 1, 8), c(g, 2, 1, 8);
  for (int i = 0; i < 3; ++i) {
    a.batch_issue_async({f.rd, 0}, {f.rs, 0}, 64);
    b.batch_issue_async({f.rd, 64}, {f.rs, 64}, 64);
  }
  c.batch_issue_async({f.rd, 128}, {f.rs, 128}, 64);
  while (!g.idle()) g.step();
  const auto trace = g.trace();
  REQUIRE(trace.size() == 7);
  const std::vector<std::uint32_t> wq_order{0, 1, 2, 0, 1, 0, 1};
  std::vector<std::uint64_t> tags_a, tags_b;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(trace[i].first == wq_order[i]);
    if (trace[i].first == 0) tags_a.push_back(trace[i].second);
    if (trace[i].first == 1) tags_b.push_back(trace[i].second);
  }
  CHECK(std::is_sorted(tags_a.begin(), tags_a.end()));
  CHECK(std::is_sorted(tags_b.begin(), tags_b.end()));
}

TEST_CASE("every copied byte matches its source") {
  Fixture f;
  EngineGroup g(0, f.config(2, 200, 4), f.reg, f.clock);
  OffloadContext ctx(g, 1, 5, 6);
  std::vector<CompletedBatch> out;
  for (std::uint64_t b = 0; b < 127; ++b) {
    // Scatter: block b goes to slot 126 - b.
    ctx.batch_issue_async({f.rd, (126 - b) * 512}, {f.rs, b * 512}, 512);
    if (ctx.batch_should_wait(1'000)) out.push_back(ctx.batch_wait_oldest());
  }
  ctx.batch_issue_pending();
  while (ctx.in_flight() > 0) out.push_back(ctx.batch_wait_oldest());
  std::uint32_t copies = 0;
  for (const auto& b : out) copies += b.count;
  CHECK(copies == 127);
  for (std::uint64_t b = 0; b < 127; ++b) {
    CHECK(std::memcmp(f.dst.data() + (126 - b) * 512, f.src.data() + b * 512, 512) == 0);
  }
}

TEST_CASE("microbenchmark: async and batched offloading pay off") {
  const auto one = copy_engine_bench(1, 1, 2'000, 0, 8, 4'000);
  const auto many = copy_engine_bench(1, 32, 2'000, 0, 8, 4'000);
  CHECK(one.data_ok);
  CHECK(many.data_ok);
  // Serial: one copy per per_copy_cost. Async: pipeline_depth copies per cost.
  CHECK(one.copies_per_second == doctest::Approx(5e5).epsilon(0.1));
  CHECK(many.copies_per_second / one.copies_per_second >= 2.0);
  const auto unbatched = copy_engine_bench(1, 32, 0, 1'000, 8, 4'000);
  const auto batched = copy_engine_bench(16, 32, 0, 1'000, 8, 4'000);
  CHECK(unbatched.issue_ns_per_copy == doctest::Approx(1'000));
  CHECK(batched.issue_ns_per_copy == doctest::Approx(1'000.0 / 16));
}
