#pragma once

#include <string>

#include "swarmemu/clock.hpp"

namespace swarmemu {

/// A polling loop body. The runner calls step() repeatedly, on a dedicated
/// host thread or interleaved with other agents on a shared one.
class Agent {
 public:
  virtual ~Agent() = default;

  /// One loop iteration; true if any work was done.
  virtual bool step() = 0;

  virtual std::string name() const = 0;

  /// Earliest clock time at which this agent will have work without any
  /// other agent acting first; kNever if unknown. Lets a virtual-clock
  /// runner skip idle time.
  virtual Timestamp next_event() const { return kNever; }
};

}  // namespace swarmemu
