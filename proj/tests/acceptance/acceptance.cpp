// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include <cstdlib>
#include <iostream>

#include "swarmemu/experiment.hpp"

int main(int argc, char** argv) {
  swarmemu::ValidationOptions opts;
  if (argc > 1) opts.seed = std::strtoull(argv[1], nullptr, 10);
  opts.on_result = [](const swarmemu::CheckResult& c) {
    std::cout << "criterion " << c.id << " " << (c.pass ? "PASS" : "FAIL") << " " << c.name << ": " << c.measured
              << " (expected " << c.expected << "; " << c.host_seconds << " s)" << std::endl;
  };
  const auto results = swarmemu::run_validation(opts);
  int failed = 0;
  for (const auto& c : results) failed += c.pass ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
