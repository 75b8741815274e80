// Python bindings. Configs and reports cross the boundary as JSON text; the
// package wrapper turns them into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "swarmemu/config.hpp"
#include "swarmemu/experiment.hpp"
#include "swarmemu/metrics.hpp"
#include "swarmemu/pattern.hpp"
#include "swarmemu/timing_model.hpp"

namespace py = pybind11;
using namespace swarmemu;
using nlohmann::json;

namespace {

json result_json(const RunResult& r) {
  json j = to_json(r.report);
  j["integrity_ok"] = r.integrity.ok();
  j["integrity_problems"] = r.integrity.problems;
  j["warnings"] = r.warnings;
  j["submitted"] = r.client.submitted;
  j["completed"] = r.client.completed;
  j["visit_digest"] = r.visit_digest;
  return j;
}

RunConfig config_from(const std::string& overrides, RunConfig base = {}) {
  return overrides.empty() ? base : merge_json(std::move(base), json::parse(overrides));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "NVMe device emulator core";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("default_config", [] { return to_json(RunConfig{}).dump(); });

  m.def("ablation_config", [](const std::string& kind, std::uint64_t seed) {
    return to_json(ablation_defaults(kind, seed)).dump();
  }, py::arg("kind"), py::arg("seed") = 42);

  m.def("run", [](const std::string& overrides) {
    const RunConfig cfg = config_from(overrides);
    RunResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(cfg);
    }
    return result_json(r).dump();
  }, py::arg("config_json"));

  m.def("ablation", [](const std::string& kind, const std::string& overrides) {
    const RunConfig cfg = config_from(overrides, ablation_defaults(kind));
    std::vector<RunResult> rows;
    {
      py::gil_scoped_release release;
      if (kind == "frontend") rows = ablation_frontend(cfg);
      else if (kind == "timing") rows = ablation_timing(cfg, {4, 8, 16});
      else rows = ablation_skew(cfg);
    }
    json out = json::array();
    for (const auto& r : rows) out.push_back(result_json(r));
    return out.dump();
  }, py::arg("kind"), py::arg("config_json") = "");

  m.def("validate", [](std::uint64_t seed, std::vector<int> only, bool inject_min_delay_fault) {
    ValidationOptions opts;
    opts.seed = seed;
    opts.only = std::move(only);
    opts.inject_min_delay_fault = inject_min_delay_fault;
    std::vector<CheckResult> results;
    {
      py::gil_scoped_release release;
      results = run_validation(opts);
    }
    json out = json::array();
    for (const auto& c : results) {
      out.push_back({{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"measured", c.measured},
                     {"expected", c.expected}, {"host_seconds", c.host_seconds}});
    }
    return out.dump();
  }, py::arg("seed") = 42, py::arg("only") = std::vector<int>{}, py::arg("inject_min_delay_fault") = false);

  m.def("derive_params", [](double t_max_iops, double l_min_seconds, std::uint32_t n_instances,
                            std::uint32_t unit_bytes) {
    const TimingParams p = derive_params(t_max_iops, l_min_seconds, n_instances, unit_bytes);
    return py::dict(py::arg("sched_seconds") = p.sched_seconds(),
                    py::arg("min_delay_seconds") = p.min_delay_seconds(), py::arg("warning") = p.warning);
  }, py::arg("t_max_iops"), py::arg("l_min_seconds"), py::arg("n_instances"), py::arg("unit_bytes") = 512);

  m.def("schedule_batch", [](double t_max_iops, double l_min_seconds, std::uint32_t n_instances,
                             const std::vector<std::pair<std::uint64_t, std::uint32_t>>& requests,
                             std::int64_t now_ns, const std::string& mode) {
    TimingModel model(derive_params(t_max_iops, l_min_seconds, n_instances));
    std::vector<IoExtent> reqs;
    for (const auto& [slba, bytes] : requests) reqs.push_back({slba, bytes});
    std::vector<Timestamp> targets(reqs.size());
    BatchScratch scratch;
    model.schedule_batch(parse_update_mode(mode), reqs, now_ns, targets, scratch);
    return targets;
  }, py::arg("t_max_iops"), py::arg("l_min_seconds"), py::arg("n_instances"), py::arg("requests"),
     py::arg("now_ns") = 0, py::arg("mode") = "aggregated",
     "Target completion times (ns) for one SQ-ordered batch of (slba, bytes) reads on a fresh model.");

  m.def("copy_engine_bench", [](std::uint32_t batch_size, std::uint32_t num_desc, std::int64_t per_copy_cost_ns,
                                std::int64_t issue_cost_ns, std::uint32_t pipeline_depth, std::uint64_t copies) {
    const auto r = copy_engine_bench(batch_size, num_desc, per_copy_cost_ns, issue_cost_ns, pipeline_depth, copies);
    return py::dict(py::arg("copies_per_second") = r.copies_per_second,
                    py::arg("issue_ns_per_copy") = r.issue_ns_per_copy, py::arg("data_ok") = r.data_ok);
  }, py::arg("batch_size") = 16, py::arg("num_desc") = 32, py::arg("per_copy_cost_ns") = 2000,
     py::arg("issue_cost_ns") = 0, py::arg("pipeline_depth") = 8, py::arg("copies") = 10000);

  m.def("read_block", [](std::uint64_t seed, std::uint64_t block, std::uint32_t block_bytes) {
    const auto bytes = read_block_oracle(seed, block, block_bytes, block + 1);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }, py::arg("seed"), py::arg("block"), py::arg("block_bytes") = 512);

  m.def("csv_header", &csv_header);
}
