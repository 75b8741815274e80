#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "swarmemu/agent.hpp"
#include "swarmemu/clock.hpp"

namespace swarmemu {

/// Multiplexes agents over host threads.
///
/// With a real clock the agents are split statically over
/// min(agents, max_threads) threads, each looping over its share. With a
/// VirtualClock everything runs on the calling thread in a fixed order and
/// global time advances between passes, which makes runs reproducible.
class AgentRunner {
 public:
  /// max_threads == 0 means std::thread::hardware_concurrency().
  explicit AgentRunner(Clock& clock, unsigned max_threads = 0);

  void add(Agent* agent);
  const std::vector<Agent*>& agents() const { return agents_; }

  /// Steps all agents until done() returns true (checked between passes)
  /// or the clock reaches `deadline`. Returns done()'s final value.
  bool run_until(const std::function<bool()>& done, Timestamp deadline = kNever);

  /// Number of host threads run_until() will use.
  unsigned threads() const;
  std::uint64_t passes() const { return passes_; }

 private:
  bool pass_virtual(VirtualClock& vc);
  bool run_threaded(const std::function<bool()>& done, Timestamp deadline, unsigned n);

  Clock& clock_;
  unsigned max_threads_;
  std::vector<Agent*> agents_;
  std::vector<Timestamp> busy_until_;
  std::uint64_t passes_ = 0;
};

}  // namespace swarmemu
