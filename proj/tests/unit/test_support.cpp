#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "swarmemu/config.hpp"
#include "swarmemu/metrics.hpp"
#include "swarmemu/pattern.hpp"
#include "swarmemu/spsc_ring.hpp"

using namespace swarmemu;
using nlohmann::json;

TEST_CASE("read_block_oracle is deterministic and block-specific") {
  const auto a = read_block_oracle(9, 5, 512, 100);
  CHECK(a == read_block_oracle(9, 5, 512, 100));
  CHECK(a != read_block_oracle(9, 6, 512, 100));
  CHECK(a != read_block_oracle(10, 5, 512, 100));
  CHECK_THROWS_AS(read_block_oracle(9, 100, 512, 100), std::out_of_range);
}

TEST_CASE("backing store holds the oracle content") {
  BackingStore store(64, 512, 3);
  for (std::uint64_t b : {0ull, 17ull, 63ull}) {
    const auto want = read_block_oracle(3, b, 512, 64);
    CHECK(std::equal(want.begin(), want.end(), store.block(b).begin()));
  }
}

TEST_CASE("verify_read examples") {
  std::vector<std::byte> buf;
  for (std::uint64_t b = 10; b < 18; ++b) {
    const auto blk = read_block_oracle(1, b, 512, 1000);
    buf.insert(buf.end(), blk.begin(), blk.end());
  }
  CHECK(verify_read(buf, 10, 7, 1, 512).ok);
  auto flipped = buf;
  flipped[7 * 512 + 3] ^= std::byte{0x10};  // last of 8 blocks
  const auto r = verify_read(flipped, 10, 7, 1, 512);
  CHECK_FALSE(r.ok);
  CHECK(r.first_bad_offset == 7 * 512 + 3);
  CHECK_FALSE(verify_read(std::span(buf).first(512), 10, 1, 1, 512).ok);
}

TEST_CASE("spsc ring keeps FIFO order across wrap") {
  SpscRing<int> ring(4);
  int v = 0;
  for (int round = 0; round < 5; ++round) {
    for (int i = 0; i < 3; ++i) CHECK(ring.try_push(round * 10 + i));
    for (int i = 0; i < 3; ++i) {
      REQUIRE(ring.try_pop(v));
      CHECK(v == round * 10 + i);
    }
  }
  CHECK_FALSE(ring.try_pop(v));
}

TEST_CASE("config defaults validate and round-trip through json") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const json j = to_json(cfg);
  const RunConfig back = merge_json(RunConfig{}, j);
  CHECK(to_json(back) == j);
}

TEST_CASE("config overlays only present keys") {
  const json j = json::parse(R"({
    "run_id": "x",
    "timing": {"t_max_iops": 200000, "mode": "per_request"},
    "device": {"n_service_units": 8, "fetch_mode": "per_entry"},
    "copy_engine": {"batch_size": 4},
    "workload": {"kind": "beam_search", "beam": {"width": 2}}
  })");
  const RunConfig cfg = merge_json(RunConfig{}, j);
  CHECK(cfg.run_id == "x");
  CHECK(cfg.device.timing.t_max_iops == 200000);
  CHECK(cfg.device.timing.mode == UpdateMode::kPerRequest);
  CHECK(cfg.device.timing.l_min_us == RunConfig{}.device.timing.l_min_us);
  CHECK(cfg.device.n_service_units == 8);
  CHECK(cfg.device.fetch_mode == FetchMode::kPerEntry);
  CHECK(cfg.device.copy_engine.batch_size == 4);
  CHECK(cfg.workload.kind == WorkloadKind::kBeamSearch);
  CHECK(cfg.workload.beam.width == 2);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(merge_json(RunConfig{}, json::parse(R"({"bogus": 1})")), ConfigError);
  CHECK_THROWS_AS(merge_json(RunConfig{}, json::parse(R"({"timing": {"tmax": 1}})")), ConfigError);
  CHECK_THROWS_AS(merge_json(RunConfig{}, json::parse(R"({"timing": {"t_max_iops": "fast"}})")), ConfigError);
  CHECK_THROWS_AS(merge_json(RunConfig{}, json::parse(R"({"device": {"fetch_mode": "sideways"}})")), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/config.json"), ConfigError);

  RunConfig bad;
  bad.device.queue_depth = 1000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.device.timing.t_max_iops = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.device.copy_engine.num_desc = 64;  // deeper than a work queue
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config file loads") {
  const auto path = std::filesystem::temp_directory_path() / "swarmemu_test_config.json";
  std::ofstream(path) << R"({"workload": {"qdepth": 4}})";
  const RunConfig cfg = load_config_file(path.string());
  CHECK(cfg.workload.qdepth == 4);
  std::filesystem::remove(path);
}

TEST_CASE("latency stats use nearest rank") {
  std::vector<Nanos> v(100);
  for (int i = 0; i < 100; ++i) v[i] = (i + 1) * 1000;
  const auto s = latency_stats(v);
  CHECK(s.count == 100);
  CHECK(s.mean_us == doctest::Approx(50.5));
  CHECK(s.p50_us == doctest::Approx(50));
  CHECK(s.p99_us == doctest::Approx(99));
  CHECK(s.max_us == doctest::Approx(100));
  std::vector<Nanos> same(10, 7000);
  const auto e = latency_stats(same);
  CHECK(e.p50_us == e.p99_us);
  CHECK(e.mean_us == doctest::Approx(7));
  std::vector<Nanos> empty;
  CHECK_THROWS_AS(latency_stats(empty), std::invalid_argument);
}

TEST_CASE("summarize computes IOPS over the window and merges buffers") {
  SampleBuffer a, b;
  // 1,000,000 completions spread over [0, 2 s].
  for (int i = 0; i < 500'000; ++i) {
    a.record({static_cast<Timestamp>(i) * 4000 + 1, 50'000, 50'000, 60'000, 0});
    b.record({static_cast<Timestamp>(i) * 4000 + 2, 50'000, 51'000, 61'000, 1});
  }
  const SampleBuffer* bufs[] = {&a, &b};
  const auto r = summarize(bufs, 0, 2'000'000'000, 0.0);
  CHECK(r.completions_in_window == 1'000'000);
  CHECK(r.iops == doctest::Approx(500'000));
  CHECK(r.target.mean_us == doctest::Approx(50));
  CHECK(r.proc.mean_us == doctest::Approx(50.5));
  const auto w = summarize(bufs, 0, 2'000'000'000, 0.5);
  CHECK(w.completions_in_window == doctest::Approx(500'000).epsilon(0.001));
  CHECK(w.window_s == doctest::Approx(1.0));
  CHECK_THROWS_AS(summarize(bufs, 3'000'000'000, 4'000'000'000, 0.0), std::invalid_argument);
}

TEST_CASE("csv export has the exact column order and one row per report") {
  CHECK(csv_header() ==
        "run_id,workload,t_max_iops,l_min_us,n_units,mode,iops,target_mean_us,proc_mean_us,e2e_mean_us,"
        "e2e_p99_us,doorbell_writes,fetch_transfers,batches_issued");
  RunReport r;
  r.run_id = "a,b";
  r.workload = "warp_coalesced";
  r.iops = 12.5;
  const auto path = std::filesystem::temp_directory_path() / "swarmemu_report.csv";
  export_report(r, path.string(), "csv");
  std::ifstream in(path);
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == csv_header());
  CHECK(row.rfind("\"a,b\",warp_coalesced,", 0) == 0);
  CHECK_FALSE(std::getline(in, extra));
  const auto jpath = std::filesystem::temp_directory_path() / "swarmemu_report.json";
  export_report(r, jpath.string(), "json");
  const json j = json::parse(std::ifstream(jpath));
  for (const auto& col : csv_columns()) CHECK(j.contains(col));
  CHECK_THROWS(export_report(r, path.string(), "xml"));
  std::filesystem::remove(path);
  std::filesystem::remove(jpath);
}
