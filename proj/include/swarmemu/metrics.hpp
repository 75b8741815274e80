#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swarmemu/clock.hpp"

namespace swarmemu {

struct RequestRecord;

/// Latencies of one completed request as seen by the submitter.
/// target = target - fetch, proc = posted - fetch, e2e = observed - submit.
struct Sample {
  Timestamp observed = 0;
  Nanos target = 0;
  Nanos proc = 0;
  Nanos e2e = 0;
  std::uint16_t qid = 0;
};

/// Single-writer buffer owned by one recording agent.
class SampleBuffer {
 public:
  void record(const Sample& s) { samples_.push_back(s); }
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  void clear() { samples_.clear(); }

 private:
  std::vector<Sample> samples_;
};

struct LatencyStats {
  std::uint64_t count = 0;
  double mean_us = 0;
  double p50_us = 0;
  double p99_us = 0;
  double max_us = 0;
};

/// Nearest-rank statistics of `values_ns`; throws std::invalid_argument when
/// empty. Reorders the input.
LatencyStats latency_stats(std::vector<Nanos>& values_ns);

struct RunReport {
  std::string run_id;
  std::string workload;
  std::string mode;
  double t_max_iops = 0;
  double l_min_us = 0;
  std::uint32_t n_units = 0;

  double iops = 0;
  std::uint64_t completions_in_window = 0;
  std::uint64_t completions_total = 0;
  double window_start_s = 0;
  double window_s = 0;
  LatencyStats target;
  LatencyStats proc;
  LatencyStats e2e;

  std::uint64_t doorbell_writes = 0;
  std::uint64_t fetch_transfers = 0;
  std::uint64_t batches_issued = 0;
  std::uint64_t guard_acquisitions = 0;
  std::uint64_t submitted = 0;

  // Beam search only.
  std::uint64_t queries = 0;
  double qps = 0;

  nlohmann::json config = nlohmann::json::object();
};

/// Merges per-agent buffers and computes statistics over
/// [start + warmup_fraction * (end - start), end]. Throws
/// std::invalid_argument if no sample falls in the window.
RunReport summarize(std::span<const SampleBuffer* const> buffers, Timestamp start, Timestamp end,
                    double warmup_fraction);

/// Exact CSV column order of exported reports.
const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string csv_row(const RunReport& r);

nlohmann::json to_json(const RunReport& r);

/// Writes one report as CSV (header + row) or JSON. Throws
/// std::runtime_error on I/O failure or an unknown format.
void export_report(const RunReport& r, const std::string& path, const std::string& format);

/// Header plus one row per report.
void export_csv(std::span<const RunReport> reports, const std::string& path);

/// One line per request record.
void dump_trace(std::span<const RequestRecord> records, const std::string& path);

}  // namespace swarmemu
