#include <random>

#include "doctest.h"
#include "swarmemu/timing_model.hpp"

using namespace swarmemu;

namespace {

constexpr Timestamp us(double v) { return static_cast<Timestamp>(v * 1000); }

/// Independent per-request reference: walk every unit op of every request in
/// order against a plain availability array.
struct ReferenceModel {
  std::int64_t sched_ps, min_delay_ps;
  std::uint32_t n, unit_bytes, block_bytes;
  std::vector<std::int64_t> avail;

  ReferenceModel(std::int64_t sched, std::int64_t min_delay, std::uint32_t instances, std::uint32_t unit = 512,
                 std::uint32_t block = 512)
      : sched_ps(sched), min_delay_ps(min_delay), n(instances), unit_bytes(unit), block_bytes(block), avail(instances, 0) {}

  Timestamp schedule(std::uint64_t slba, std::uint32_t bytes, Timestamp now_ns) {
    const std::uint32_t units = std::max<std::uint32_t>(1, (bytes + unit_bytes - 1) / unit_bytes);
    std::int64_t done = 0;
    for (std::uint32_t u = 0; u < units; ++u) {
      const std::uint64_t inst = (slba * block_bytes / unit_bytes + u) % n;
      const std::int64_t start = std::max<std::int64_t>(avail[inst], now_ns * 1000);
      avail[inst] = start + sched_ps;
      done = std::max(done, avail[inst] + min_delay_ps);
    }
    return (done + 999) / 1000;
  }
};

}  // namespace

TEST_CASE("derive_params examples") {
  const auto a = derive_params(2.47e6, 50e-6, 32);
  CHECK(a.sched_seconds() == doctest::Approx(32 / 2.47e6).epsilon(1e-9));
  CHECK(a.sched_seconds() * 1e6 == doctest::Approx(12.955).epsilon(1e-4));
  CHECK(a.min_delay_seconds() * 1e6 == doctest::Approx(37.045).epsilon(1e-4));
  CHECK(a.warning.empty());

  const auto b = derive_params(1e6, 50e-6, 1);
  CHECK(b.sched_ps == 1'000'000);
  CHECK(b.min_delay_ps == 49'000'000);

  const auto c = derive_params(1e6, 0.5e-6, 1);
  CHECK(c.min_delay_ps == 0);
  CHECK_FALSE(c.warning.empty());

  CHECK_THROWS_AS(derive_params(0, 50e-6, 1), std::invalid_argument);
  CHECK_THROWS_AS(derive_params(1e6, 50e-6, 0), std::invalid_argument);
  CHECK_THROWS_AS(derive_params(1e6, -1, 1), std::invalid_argument);
}

TEST_CASE("aggregate capacity identity n / sched = t_max") {
  for (double t : {5e4, 2e5, 2.47e6, 4e7}) {
    for (std::uint32_t n : {1u, 8u, 32u}) {
      const auto p = derive_params(t, 50e-6, n);
      CHECK(n / p.sched_seconds() == doctest::Approx(t).epsilon(1e-6));
    }
  }
}

TEST_CASE("instance_of and unit_count examples") {
  const auto p = derive_params(1e6, 50e-6, 32);
  CHECK(instance_of(0, 0, p) == 0);
  CHECK(instance_of(33, 0, p) == 1);
  CHECK(unit_count(4096, p) == 8);
  for (std::uint32_t u = 0; u < 8; ++u) CHECK(instance_of(0, u, p) == u);
  CHECK(unit_count(1, p) == 1);
}

TEST_CASE("schedule_request follows the low-load and deferral rules") {
  // sched 10 us, min_delay 40 us, one instance.
  const auto p = derive_params(1e5, 50e-6, 1);
  TimingModel m(p);
  CHECK(m.schedule_request({0, 512}, 0) == us(50));
  CHECK(m.availability()[0] == us(10) * 1000);
  CHECK(m.schedule_request({1, 512}, us(5)) == us(60));
  CHECK(m.availability()[0] == us(20) * 1000);
  CHECK(m.schedule_request({2, 512}, us(100)) == us(150));
}

TEST_CASE("schedule_batch_aggregated examples") {
  BatchScratch scratch;
  SUBCASE("three requests on one instance") {
    TimingModel m(derive_params(1e5, 50e-6, 1));
    std::vector<IoExtent> reqs{{0, 512}, {1, 512}, {2, 512}};
    std::vector<Timestamp> t(3);
    m.schedule_batch_aggregated(reqs, 0, t, scratch);
    CHECK(t == std::vector<Timestamp>{us(50), us(60), us(70)});
    CHECK(m.availability()[0] == us(30) * 1000);
    CHECK(m.guard_acquisitions() == 1);
  }
  SUBCASE("two instances interleave") {
    TimingModel m(derive_params(2e5, 50e-6, 2));
    std::vector<IoExtent> reqs{{0, 512}, {1, 512}, {2, 512}};
    std::vector<Timestamp> t(3);
    m.schedule_batch_aggregated(reqs, 0, t, scratch);
    CHECK(t == std::vector<Timestamp>{us(50), us(50), us(60)});
  }
  SUBCASE("empty batch changes nothing") {
    TimingModel m(derive_params(1e5, 50e-6, 4));
    const auto before = m.availability();
    std::vector<Timestamp> t;
    m.schedule_batch_aggregated({}, us(3), t, scratch);
    CHECK(m.availability() == before);
    CHECK(m.guard_acquisitions() == 0);
  }
}

TEST_CASE("aggregated updates equal per-request updates and a brute-force reference") {
  std::mt19937_64 rng(11);
  for (std::uint32_t n : {1u, 3u, 8u, 32u}) {
    const auto p = derive_params(3.3e5, 47e-6, n);
    TimingModel per(p), agg(p);
    ReferenceModel ref(p.sched_ps, p.min_delay_ps, n);
    BatchScratch scratch;
    Timestamp now = 0;
    for (int b = 0; b < 500; ++b) {
      std::vector<IoExtent> reqs(1 + rng() % 40);
      for (auto& r : reqs) r = {rng() % 100'000, static_cast<std::uint32_t>(512 * (1 + rng() % 9))};
      std::vector<Timestamp> a(reqs.size()), g(reqs.size());
      per.schedule_batch_per_request(reqs, now, a);
      agg.schedule_batch_aggregated(reqs, now, g, scratch);
      for (std::size_t i = 0; i < reqs.size(); ++i) {
        REQUIRE(a[i] == g[i]);
        REQUIRE(a[i] == ref.schedule(reqs[i].slba, reqs[i].bytes, now));
      }
      now += static_cast<Timestamp>(rng() % 50'000);
    }
    CHECK(per.availability() == agg.availability());
  }
}

TEST_CASE("per-request mode takes the guard once per request") {
  TimingModel m(derive_params(1e6, 50e-6, 4));
  std::vector<IoExtent> reqs(10);
  std::vector<Timestamp> t(10);
  BatchScratch s;
  m.schedule_batch(UpdateMode::kPerRequest, reqs, 0, t, s);
  CHECK(m.guard_acquisitions() == 10);
  m.schedule_batch(UpdateMode::kAggregated, reqs, 0, t, s);
  CHECK(m.guard_acquisitions() == 11);
}

TEST_CASE("targets are never earlier than now + l_min at low load") {
  const auto p = derive_params(2.47e6, 50e-6, 32);
  TimingModel m(p);
  Timestamp now = 0;
  for (int i = 0; i < 1000; ++i) {
    now += 1'000'000;  // idle gaps
    CHECK(m.schedule_request({static_cast<std::uint64_t>(i * 7), 512}, now) - now == 50'000);
  }
}

TEST_CASE("local_model_partition") {
  const auto p = derive_params(40e6, 50e-6, 32);
  const auto parts = local_model_partition(p, 16);
  REQUIRE(parts.size() == 16);
  for (const auto& q : parts) CHECK(q.t_max_iops == doctest::Approx(2.5e6));
  const auto one = local_model_partition(p, 1);
  CHECK(one[0].sched_ps == p.sched_ps);
  CHECK(one[0].min_delay_ps == p.min_delay_ps);
}

TEST_CASE("dropping min_delay is observable") {
  TimingModel m(derive_params(1e5, 50e-6, 1));
  m.set_drop_min_delay(true);
  CHECK(m.schedule_request({0, 512}, 0) == us(10));
}

TEST_CASE("guard hold cost serializes in virtual time") {
  VirtualClock clock;
  TimingModel m(derive_params(1e6, 50e-6, 4), &clock);
  m.set_guard_hold_cost(4'000);
  Timestamp local_a = 0, local_b = 0;
  clock.bind_local(&local_a);
  m.schedule_request({0, 512}, clock.now());
  clock.bind_local(&local_b);
  m.schedule_request({1, 512}, clock.now());
  clock.bind_local(nullptr);
  CHECK(local_a == 4'000);
  CHECK(local_b == 8'000);  // waited for the first holder
}

TEST_CASE("mode and scope names round-trip") {
  CHECK(parse_update_mode(to_string(UpdateMode::kAggregated)) == UpdateMode::kAggregated);
  CHECK(parse_update_mode(to_string(UpdateMode::kPerRequest)) == UpdateMode::kPerRequest);
  CHECK(parse_model_scope(to_string(ModelScope::kLocal)) == ModelScope::kLocal);
  CHECK_THROWS(parse_update_mode("bogus"));
}
