#include "swarmemu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "swarmemu/device.hpp"

namespace swarmemu {

LatencyStats latency_stats(std::vector<Nanos>& v) {
  if (v.empty()) throw std::invalid_argument("no latency samples");
  std::sort(v.begin(), v.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return static_cast<double>(v[std::clamp<std::size_t>(k, 1, v.size()) - 1]) / 1e3;
  };
  LatencyStats s;
  s.count = v.size();
  const long double sum = std::accumulate(v.begin(), v.end(), 0.0L);
  s.mean_us = static_cast<double>(sum / static_cast<long double>(v.size()) / 1e3L);
  s.p50_us = rank(0.50);
  s.p99_us = rank(0.99);
  s.max_us = static_cast<double>(v.back()) / 1e3;
  return s;
}

RunReport summarize(std::span<const SampleBuffer* const> buffers, Timestamp start, Timestamp end,
                    double warmup_fraction) {
  if (end <= start) throw std::invalid_argument("empty measurement window");
  const Timestamp from = start + static_cast<Timestamp>(warmup_fraction * static_cast<double>(end - start));
  std::vector<Nanos> target, proc, e2e;
  std::uint64_t total = 0;
  for (const SampleBuffer* b : buffers) {
    total += b->size();
    for (const Sample& s : b->samples()) {
      if (s.observed < from || s.observed > end) continue;
      target.push_back(s.target);
      proc.push_back(s.proc);
      e2e.push_back(s.e2e);
    }
  }
  if (target.empty()) throw std::invalid_argument("no completions inside the measurement window");
  RunReport r;
  r.completions_total = total;
  r.completions_in_window = target.size();
  r.window_start_s = static_cast<double>(from - start) / 1e9;
  r.window_s = static_cast<double>(end - from) / 1e9;
  r.iops = static_cast<double>(target.size()) / r.window_s;
  r.target = latency_stats(target);
  r.proc = latency_stats(proc);
  r.e2e = latency_stats(e2e);
  return r;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "run_id",       "workload",     "t_max_iops",  "l_min_us",        "n_units",
      "mode",         "iops",         "target_mean_us", "proc_mean_us", "e2e_mean_us",
      "e2e_p99_us",   "doorbell_writes", "fetch_transfers", "batches_issued"};
  return cols;
}

std::string csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}
}  // namespace

std::string csv_row(const RunReport& r) {
  std::ostringstream os;
  os << csv_field(r.run_id) << ',' << csv_field(r.workload) << ',' << num(r.t_max_iops) << ','
     << num(r.l_min_us) << ',' << r.n_units << ',' << csv_field(r.mode) << ',' << fixed(r.iops, 1) << ','
     << fixed(r.target.mean_us, 3) << ',' << fixed(r.proc.mean_us, 3) << ',' << fixed(r.e2e.mean_us, 3) << ','
     << fixed(r.e2e.p99_us, 3) << ',' << r.doorbell_writes << ',' << r.fetch_transfers << ','
     << r.batches_issued;
  return os.str();
}

namespace {
nlohmann::json stats_json(const LatencyStats& s) {
  return {{"count", s.count}, {"mean_us", s.mean_us}, {"p50_us", s.p50_us}, {"p99_us", s.p99_us},
          {"max_us", s.max_us}};
}
}  // namespace

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j = {
      {"run_id", r.run_id},
      {"workload", r.workload},
      {"t_max_iops", r.t_max_iops},
      {"l_min_us", r.l_min_us},
      {"n_units", r.n_units},
      {"mode", r.mode},
      {"iops", r.iops},
      {"target_mean_us", r.target.mean_us},
      {"proc_mean_us", r.proc.mean_us},
      {"e2e_mean_us", r.e2e.mean_us},
      {"e2e_p99_us", r.e2e.p99_us},
      {"doorbell_writes", r.doorbell_writes},
      {"fetch_transfers", r.fetch_transfers},
      {"batches_issued", r.batches_issued},
      {"guard_acquisitions", r.guard_acquisitions},
      {"submitted", r.submitted},
      {"completions_total", r.completions_total},
      {"completions_in_window", r.completions_in_window},
      {"window_start_s", r.window_start_s},
      {"window_s", r.window_s},
      {"latency", {{"target", stats_json(r.target)}, {"proc", stats_json(r.proc)}, {"e2e", stats_json(r.e2e)}}},
      {"config", r.config},
  };
  if (r.queries > 0) {
    j["queries"] = r.queries;
    j["qps"] = r.qps;
  }
  return j;
}

void export_report(const RunReport& r, const std::string& path, const std::string& format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  if (format == "csv") {
    out << csv_header() << '\n' << csv_row(r) << '\n';
  } else if (format == "json") {
    out << to_json(r).dump(2) << '\n';
  } else {
    throw std::runtime_error("unknown export format '" + format + "' (expected csv|json)");
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void export_csv(std::span<const RunReport> reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << csv_header() << '\n';
  for (const auto& r : reports) out << csv_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void dump_trace(std::span<const RequestRecord> records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "qid,cid,slba,nlb,status,fetch_ns,target_ns,copy_done_ns,posted_ns\n";
  for (const auto& r : records) {
    out << r.qid << ',' << r.cid << ',' << r.slba << ',' << r.nlb << ',' << static_cast<unsigned>(r.status) << ','
        << r.fetch << ',' << r.target << ',' << r.copy_done << ',' << r.posted << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace swarmemu
