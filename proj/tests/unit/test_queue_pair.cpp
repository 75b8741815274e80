#include <cstring>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "swarmemu/queue_pair.hpp"

using namespace swarmemu;

namespace {

std::vector<nvme::Command> commands(std::uint32_t n, std::uint16_t first_cid = 0) {
  std::vector<nvme::Command> v(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    v[i].cid = static_cast<std::uint16_t>(first_cid + i);
    v[i].slba = 1000 + i;
  }
  return v;
}

QueuePair::CopyFn copy_into(QueuePair& qp, FetchBuffer& buf, int* transfers = nullptr) {
  return [&qp, &buf, transfers](std::size_t src, std::size_t dst, std::size_t len) {
    std::memcpy(buf.bytes().data() + dst, qp.sq_ring().data() + src, len);
    if (transfers) ++*transfers;
  };
}

/// Moves the whole ring to `tail` by submitting, fetching and completing.
void advance_to(QueuePair& qp, FetchBuffer& buf, std::uint32_t tail) {
  std::vector<nvme::Completion> out;
  while (qp.sq_tail_doorbell() != tail) {
    const std::uint32_t n = std::min<std::uint32_t>(doorbell_delta(qp.sq_tail_doorbell(), tail, qp.depth()), 512);
    auto cmds = commands(n);
    REQUIRE(qp.try_submit(cmds));
    qp.fetch_coalesced(n, buf, copy_into(qp, buf));
    for (std::uint32_t i = 0; i < n; ++i) qp.post_completion(static_cast<std::uint16_t>(i), qp.sq_head(), nvme::Status::kSuccess);
    out.clear();
    REQUIRE(qp.consume_completions(n, out) == n);
  }
}

}  // namespace

TEST_CASE("doorbell_delta examples") {
  CHECK(doorbell_delta(10, 14, 1024) == 4);
  CHECK(doorbell_delta(1022, 2, 1024) == 4);
  CHECK(doorbell_delta(5, 5, 1024) == 0);
  CHECK_THROWS_AS(doorbell_delta(1024, 2, 1024), std::out_of_range);
}

TEST_CASE("submit writes consecutive slots with one doorbell") {
  QueuePair qp(1, 1024);
  FetchBuffer buf(1024);
  advance_to(qp, buf, 10);
  const auto before = qp.doorbell_writes();
  auto cmds = commands(32, 100);
  REQUIRE(qp.try_submit(cmds));
  CHECK(qp.sq_tail_doorbell() == 42);
  CHECK(qp.doorbell_writes() == before + 1);
  for (std::uint32_t i = 0; i < 32; ++i) {
    auto slot = std::span<const std::byte, nvme::kSqeBytes>(qp.sq_ring().data() + (10 + i) * nvme::kSqeBytes,
                                                             nvme::kSqeBytes);
    CHECK(nvme::decode(slot).cid == 100 + i);
  }
}

TEST_CASE("submit wraps around the ring") {
  QueuePair qp(1, 1024);
  FetchBuffer buf(1024);
  advance_to(qp, buf, 1022);
  auto cmds = commands(4, 7);
  REQUIRE(qp.try_submit(cmds));
  CHECK(qp.sq_tail_doorbell() == 2);
  const std::uint32_t slots[] = {1022, 1023, 0, 1};
  for (int i = 0; i < 4; ++i) {
    auto slot = std::span<const std::byte, nvme::kSqeBytes>(qp.sq_ring().data() + slots[i] * nvme::kSqeBytes,
                                                             nvme::kSqeBytes);
    CHECK(nvme::decode(slot).cid == 7 + i);
  }
}

TEST_CASE("single 512-byte read is visible to the dispatcher") {
  QueuePair qp(0, 64);
  nvme::Command c;
  c.cid = 3;
  c.slba = 77;
  c.nlb = 0;
  REQUIRE(qp.try_submit(std::span(&c, 1)));
  CHECK(qp.pending() == 1);
  FetchBuffer buf(64);
  qp.fetch_coalesced(1, buf, copy_into(qp, buf));
  const auto got = nvme::decode(buf.entry(0));
  CHECK(got == c);
  CHECK(got.block_count() * 512 == 512);
}

TEST_CASE("submit refuses to overfill the ring") {
  QueuePair qp(0, 8);
  auto cmds = commands(7);
  CHECK(qp.try_submit(cmds));
  auto one = commands(1);
  CHECK_FALSE(qp.try_submit(one));
  CHECK(qp.sq_free() == 0);
}

TEST_CASE("fetch_coalesced segments") {
  SUBCASE("head 0, n 64") {
    QueuePair qp(0, 1024);
    FetchBuffer buf(1024);
    auto cmds = commands(64);
    REQUIRE(qp.try_submit(cmds));
    int transfers = 0;
    const auto plan = qp.fetch_coalesced(64, buf, copy_into(qp, buf, &transfers));
    REQUIRE(plan.count == 1);
    CHECK(plan.segments[0] == FetchSegment{0, 4096});
    CHECK(transfers == 1);
    for (std::uint32_t i = 0; i < 64; ++i) CHECK(nvme::decode(buf.entry(i)).cid == i);
  }
  SUBCASE("head 1022, n 4 splits at the wrap") {
    QueuePair qp(0, 1024);
    FetchBuffer buf(1024);
    advance_to(qp, buf, 1022);
    auto cmds = commands(4, 50);
    REQUIRE(qp.try_submit(cmds));
    int transfers = 0;
    const auto plan = qp.fetch_coalesced(4, buf, copy_into(qp, buf, &transfers));
    REQUIRE(plan.count == 2);
    CHECK(plan.segments[0] == FetchSegment{1022, 128});
    CHECK(plan.segments[1] == FetchSegment{0, 128});
    CHECK(transfers == 2);
    for (std::uint32_t i = 0; i < 4; ++i) CHECK(nvme::decode(buf.entry(i)).cid == 50 + i);
    CHECK(qp.sq_head() == 2);
  }
  SUBCASE("head 7, n 1") {
    QueuePair qp(0, 1024);
    FetchBuffer buf(1024);
    advance_to(qp, buf, 7);
    auto cmds = commands(1);
    REQUIRE(qp.try_submit(cmds));
    const auto plan = qp.fetch_coalesced(1, buf, copy_into(qp, buf));
    REQUIRE(plan.count == 1);
    CHECK(plan.segments[0] == FetchSegment{7, 64});
  }
}

TEST_CASE("per-entry fetch uses one transfer per entry") {
  QueuePair qp(0, 64);
  FetchBuffer buf(64);
  auto cmds = commands(10);
  REQUIRE(qp.try_submit(cmds));
  int transfers = 0;
  CHECK(qp.fetch_per_entry(10, buf, copy_into(qp, buf, &transfers)) == 10);
  CHECK(transfers == 10);
  CHECK(qp.pending() == 0);
  CHECK(qp.unfetched() == 0);
}

TEST_CASE("completion phase flips after a full lap") {
  QueuePair qp(0, 4);
  std::vector<nvme::Completion> out;
  auto status_word = [&](std::uint32_t slot) {
    std::uint16_t w;
    std::memcpy(&w, qp.cq_ring().data() + slot * nvme::kCqeBytes + 14, 2);
    return w;
  };
  for (std::uint16_t i = 0; i < 3; ++i) qp.post_completion(i, 0, nvme::Status::kSuccess);
  for (std::uint32_t s = 0; s < 3; ++s) CHECK((status_word(s) & 1u) == 1u);
  // The success status carries no code bits.
  CHECK((status_word(0) & 0xFFFEu) == 0);
  REQUIRE(qp.consume_completions(8, out) == 3);
  qp.post_completion(3, 0, nvme::Status::kSuccess);
  qp.post_completion(4, 0, nvme::Status::kSuccess);
  CHECK((status_word(3) & 1u) == 1u);
  CHECK((status_word(0) & 1u) == 0u);
  out.clear();
  REQUIRE(qp.consume_completions(8, out) == 2);
  CHECK(out[0].cid == 3);
  CHECK(out[1].cid == 4);
}

TEST_CASE("consume_completions examples") {
  QueuePair qp(0, 16);
  std::vector<nvme::Completion> out;
  SUBCASE("nothing pending leaves the doorbell alone") {
    CHECK(qp.consume_completions(8, out) == 0);
    CHECK(out.empty());
    CHECK(qp.cq_occupancy() == 0);
  }
  SUBCASE("3 pending, max 8") {
    for (std::uint16_t i = 0; i < 3; ++i) qp.post_completion(i, 0, nvme::Status::kSuccess);
    CHECK(qp.cq_occupancy() == 3);
    CHECK(qp.consume_completions(8, out) == 3);
    CHECK(qp.cq_occupancy() == 0);
  }
  SUBCASE("5 pending, max 2") {
    for (std::uint16_t i = 0; i < 5; ++i) qp.post_completion(i, 0, nvme::Status::kSuccess);
    CHECK(qp.consume_completions(2, out) == 2);
    CHECK(qp.consume_completions(8, out) == 3);
    std::set<std::uint16_t> cids;
    for (const auto& c : out) cids.insert(c.cid);
    CHECK(cids.size() == 5);
  }
  SUBCASE("cid 7 observed exactly once") {
    qp.post_completion(7, 0, nvme::Status::kSuccess);
    CHECK(qp.consume_completions(8, out) == 1);
    CHECK(out[0].cid == 7);
    CHECK(qp.consume_completions(8, out) == 0);
  }
  SUBCASE("error status round-trips") {
    qp.post_completion(1, 0, nvme::Status::kLbaOutOfRange);
    REQUIRE(qp.consume_completions(1, out) == 1);
    CHECK(out[0].status_code() == static_cast<std::uint16_t>(nvme::Status::kLbaOutOfRange));
  }
}

TEST_CASE("queue depth must be a power of two") {
  CHECK_THROWS_AS(QueuePair(0, 1000), std::invalid_argument);
  CHECK_THROWS_AS(QueuePair(0, 1), std::invalid_argument);
}

TEST_CASE("two-thread stress: every CID completes exactly once") {
  constexpr std::uint32_t kDepth = 64;
  constexpr std::uint32_t kTotal = 200'000;
  QueuePair qp(0, kDepth);
  std::atomic<bool> done{false};
  std::thread device([&] {
    FetchBuffer buf(kDepth);
    std::mt19937 rng(3);
    std::vector<nvme::Command> fetched;
    while (!done.load(std::memory_order_acquire) || qp.pending() > 0) {
      const std::uint32_t n = qp.pending();
      if (n == 0) {
        std::this_thread::yield();
        continue;
      }
      qp.fetch_coalesced(n, buf, copy_into(qp, buf));
      fetched.clear();
      for (std::uint32_t i = 0; i < n; ++i) fetched.push_back(nvme::decode(buf.entry(i)));
      std::shuffle(fetched.begin(), fetched.end(), rng);  // out-of-order completion
      for (const auto& c : fetched) qp.post_completion(c.cid, static_cast<std::uint16_t>(qp.sq_head()), nvme::Status::kSuccess);
    }
  });
  std::vector<std::uint32_t> seen(kDepth, 0);
  std::vector<std::uint16_t> free_cids;
  for (std::uint16_t c = 0; c < kDepth - 1; ++c) free_cids.push_back(c);
  std::vector<nvme::Completion> out;
  std::uint32_t submitted = 0, completed = 0;
  std::uint64_t violations = 0;
  std::vector<bool> outstanding(kDepth, false);
  while (completed < kTotal) {
    while (submitted < kTotal && !free_cids.empty() && qp.sq_free() > 0) {
      nvme::Command c;
      c.cid = free_cids.back();
      free_cids.pop_back();
      outstanding[c.cid] = true;
      REQUIRE(qp.try_submit(std::span(&c, 1)));
      ++submitted;
    }
    out.clear();
    qp.consume_completions(kDepth, out);
    for (const auto& c : out) {
      if (c.cid >= kDepth || !outstanding[c.cid]) {
        ++violations;
        continue;
      }
      outstanding[c.cid] = false;
      free_cids.push_back(c.cid);
      ++completed;
    }
    if (out.empty()) std::this_thread::yield();
  }
  done.store(true, std::memory_order_release);
  device.join();
  CHECK(violations == 0);
  CHECK(completed == kTotal);
}
