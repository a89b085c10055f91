// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <unordered_set>
#include <vector>

#include "trigsim/error.hpp"
#include "trigsim/trace.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

/// Deterministic discrete-event engine. Single logical thread of control:
/// all state mutation happens inside event handlers. Events with equal
/// timestamps run in insertion order (monotone seq), so a fixed scenario and
/// seed replays bit-exactly.
class Engine {
 public:
  enum class RunStatus { Idle, LimitReached, Deadlock, Stopped };

  SimTime now() const { return now_; }

  /// Ask run_until to stop after the current event returns (fail-stop actor
  /// faults). Sticky for the lifetime of the engine.
  void request_stop() { stop_ = true; }
  bool stop_requested() const { return stop_; }

  /// Queue a handler at an absolute time. Daemon events (periodic host polls)
  /// do not count as progress sources: a run ends Idle/Deadlock once only
  /// daemon work could remain and none of it reschedules.
  Result<EventId> schedule(SimTime time, EventKind kind, std::function<void()> fn,
                           RankId rank = kNoRank, std::uint64_t a = 0, std::uint64_t b = 0,
                           std::uint64_t c = 0, bool daemon = false);

  /// Convenience for `now + delay`.
  EventId schedule_in(SimTime delay, EventKind kind, std::function<void()> fn,
                      RankId rank = kNoRank, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0, bool daemon = false);

  /// Cancel a not-yet-processed event. Used by fallback takeover.
  Status cancel(EventId id);

  /// Process events with time <= limit. Returns Deadlock when the queue
  /// drains while actors are still parked on wake conditions.
  RunStatus run_until(SimTime limit);

  std::size_t pending_events() const { return queue_.size() - cancelled_.size(); }
  std::size_t pending_non_daemon() const { return pending_non_daemon_; }
  std::uint64_t processed_events() const { return processed_; }

  // Parked-actor bookkeeping for deadlock detection. Actors (or any blocked
  // wait) register while parked and deregister on wake.
  void add_waiter() { ++waiters_; }
  void remove_waiter() { --waiters_; }
  std::uint32_t waiters() const { return waiters_; }

  TraceLog& trace() { return trace_; }
  const TraceLog& trace() const { return trace_; }

 private:
  struct Item {
    SimTime time;
    std::uint64_t seq;
    EventKind kind;
    RankId rank;
    std::uint64_t a, b, c;
    bool daemon;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Item& lhs, const Item& rhs) const {
      if (lhs.time != rhs.time) return lhs.time > rhs.time;
      return lhs.seq > rhs.seq;
    }
  };

  SimTime now_ = 0;
  bool stop_ = false;
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::size_t pending_non_daemon_ = 0;
  std::uint32_t waiters_ = 0;
  std::priority_queue<Item, std::vector<Item>, Later> queue_;
  std::unordered_set<EventId> cancelled_;
  TraceLog trace_;
};

}  // namespace trigsim
