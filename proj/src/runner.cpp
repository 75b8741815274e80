#include "swarmemu/runner.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>

namespace swarmemu {

std::shared_ptr<Clock> make_default_clock() {
  auto clock = std::make_shared<SteadyClock>();
  clock->set_yield_on_relax(std::thread::hardware_concurrency() <= 1);
  return clock;
}

AgentRunner::AgentRunner(Clock& clock, unsigned max_threads) : clock_(clock), max_threads_(max_threads) {}

void AgentRunner::add(Agent* agent) {
  if (agent == nullptr) throw std::invalid_argument("null agent");
  agents_.push_back(agent);
  busy_until_.push_back(0);
}

unsigned AgentRunner::threads() const {
  if (clock_.is_virtual() || agents_.empty()) return 1;
  const unsigned hw = max_threads_ != 0 ? max_threads_ : std::max(1u, std::thread::hardware_concurrency());
  return std::min<unsigned>(hw, static_cast<unsigned>(agents_.size()));
}

bool AgentRunner::pass_virtual(VirtualClock& vc) {
  const Timestamp g = vc.global();
  Timestamp next = kNever;
  bool progress = false;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (busy_until_[i] > g) {
      next = std::min(next, busy_until_[i]);
      continue;
    }
    Timestamp local = g;
    vc.bind_local(&local);
    progress |= agents_[i]->step();
    vc.bind_local(nullptr);
    if (local > g) {
      busy_until_[i] = local;
      next = std::min(next, local);
    }
    next = std::min(next, agents_[i]->next_event());
  }
  if (progress) {
    vc.set(std::min(g + vc.pass_ns(), std::max(g + 1, next)));
  } else if (next != kNever && next > g) {
    vc.set(next);
  } else {
    vc.set(g + vc.idle_ns());
  }
  ++passes_;
  return progress;
}

bool AgentRunner::run_until(const std::function<bool()>& done, Timestamp deadline) {
  if (auto* vc = dynamic_cast<VirtualClock*>(&clock_)) {
    while (!done()) {
      if (vc->global() >= deadline) return false;
      pass_virtual(*vc);
    }
    return true;
  }
  const unsigned n = threads();
  if (n > 1) return run_threaded(done, deadline, n);
  while (!done()) {
    if (clock_.now() >= deadline) return false;
    bool progress = false;
    for (Agent* a : agents_) progress |= a->step();
    if (!progress) clock_.relax();
    ++passes_;
  }
  return true;
}

bool AgentRunner::run_threaded(const std::function<bool()>& done, Timestamp deadline, unsigned n) {
  std::atomic<bool> stop{false};
  auto loop = [&](unsigned part) {
    while (!stop.load(std::memory_order_acquire)) {
      bool progress = false;
      for (std::size_t i = part; i < agents_.size(); i += n) progress |= agents_[i]->step();
      if (!progress) clock_.relax();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(loop, t);
  bool finished = false;
  while (true) {
    if (done()) {
      finished = true;
      break;
    }
    if (clock_.now() >= deadline) break;
    bool progress = false;
    for (std::size_t i = 0; i < agents_.size(); i += n) progress |= agents_[i]->step();
    if (!progress) clock_.relax();
    ++passes_;
  }
  stop.store(true, std::memory_order_release);
  for (auto& th : pool) th.join();
  return finished;
}

}  // namespace swarmemu
