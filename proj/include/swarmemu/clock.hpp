#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <thread>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#endif

namespace swarmemu {

/// Nanoseconds in the emulator's monotonic clock domain.
using Timestamp = std::int64_t;
using Nanos = std::int64_t;

inline constexpr Nanos kNanosPerMicro = 1'000;
inline constexpr Nanos kNanosPerSecond = 1'000'000'000;
inline constexpr Timestamp kNever = INT64_MAX;

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  _mm_pause();
#else
  std::this_thread::yield();
#endif
}

/// Single time source shared by every component of a run.
///
/// Busy-wait helpers live here so that a virtual clock can charge the
/// waited time to simulated time instead of spinning forever.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual Timestamp now() const = 0;

  /// Burn `ns` of time on the calling agent (synthetic cost knobs).
  virtual void spin_for(Nanos ns) = 0;

  /// Called by polling loops that made no progress.
  virtual void relax() = 0;

  virtual bool is_virtual() const { return false; }

  /// Granularity used by "never early" checks.
  virtual Nanos granularity() const { return 1; }
};

class SteadyClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

  void spin_for(Nanos ns) override {
    if (ns <= 0) return;
    const Timestamp until = now() + ns;
    while (now() < until) cpu_relax();
  }

  void relax() override {
    if (yield_on_relax_) {
      std::this_thread::yield();
    } else {
      cpu_relax();
    }
  }

  /// Oversubscribed hosts should yield instead of pausing.
  void set_yield_on_relax(bool yield) { yield_on_relax_ = yield; }

 private:
  bool yield_on_relax_ = false;
};

/// Deterministic clock: time only moves when someone charges it.
///
/// The runner owns global time. While an agent steps, the runner binds a
/// per-agent local time starting at the global time; spins and relaxes
/// advance only that local time. An agent whose local time ran ahead is
/// busy until global time catches up, so agents behave as if each had its
/// own core. Single-threaded use only.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Nanos pass_ns = 1'000, Nanos idle_ns = 500, Timestamp start = 0)
      : global_(start), pass_ns_(pass_ns), idle_ns_(idle_ns) {}

  Timestamp now() const override { return local_ != nullptr ? *local_ : global_; }
  Timestamp global() const { return global_; }
  void set(Timestamp t) { global_ = t; }
  void advance(Nanos ns) { global_ += ns; }

  /// Binds (or, with nullptr, unbinds) the stepping agent's local time.
  void bind_local(Timestamp* local) { local_ = local; }

  void spin_for(Nanos ns) override {
    if (ns > 0) charge(ns);
  }
  void relax() override { charge(idle_ns_); }
  bool is_virtual() const override { return true; }

  Nanos pass_ns() const { return pass_ns_; }
  Nanos idle_ns() const { return idle_ns_; }

 private:
  void charge(Nanos ns) {
    if (local_ != nullptr) {
      *local_ += ns;
    } else {
      global_ += ns;
    }
  }

  Timestamp global_;
  Timestamp* local_ = nullptr;
  Nanos pass_ns_;
  Nanos idle_ns_;
};

std::shared_ptr<Clock> make_default_clock();

}  // namespace swarmemu
