// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "trigsim/types.hpp"

namespace trigsim {

/// Engine event kinds. The first block matches the wire/NIC lifecycle; the
/// trailing entries are host/actor bookkeeping.
enum class EventKind : std::uint8_t {
  DoorbellWrite,
  NicCheckTriggers,
  NicExecute,
  WireDelivery,
  CompletionWriteback,
  HostPollTick,
  ActorResume,
  FlushComplete,
  HostMemoryWrite,
};

const char* to_string(EventKind kind);

/// One processed engine event. `a/b/c` are kind-specific payload fields; the
/// text form is `time<TAB>kind<TAB>payload` for ordering assertions.
struct TraceEvent {
  SimTime time = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::ActorResume;
  RankId rank = kNoRank;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
};

/// Optional in-memory event log. Disabled by default; tests and traced runs
/// enable it. Two runs of the same scenario must produce identical logs.
class TraceLog {
 public:
  void enable(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }

  void record(const TraceEvent& ev) {
    if (enabled_) events_.push_back(ev);
  }

  const std::vector<TraceEvent>& events() const { return events_; }
  void clear() { events_.clear(); }

  void write_text(std::ostream& os) const;

 private:
  bool enabled_ = false;
  std::vector<TraceEvent> events_;
};

/// Coordination-level trace entry. Always recorded (small: one per protocol
/// action, not per engine event); the acceptance oracles run over these.
struct CoordEvent {
  enum class Kind : std::uint8_t {
    BarrierEnter,       // a = barrier index
    BarrierExit,        // a = barrier index
    DeviceTrigger,      // a = stream id (c = epoch > 0) or counter id (raw, c = 0), b = value
    ReadinessWrite,     // a = stream id, b = epoch value
    SignalObserved,     // a = word offset, b = observed value
    FallbackIssued,     // a = stream id, b = generation
    AmSent,             // a = peer, b = handler id, c = sequence
    AmDispatched,       // a = source, b = handler id, c = sequence
    QueueWork,          // a = entry id (host arming; absent on IB traces)
    MonitorTick,        // (absent on IB traces)
    FlushStart,         // a = nic id
  };

  SimTime time = 0;
  std::uint64_t seq = 0;  // global coordination-event ordinal
  RankId rank = kNoRank;
  Kind kind = Kind::BarrierEnter;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
};

const char* to_string(CoordEvent::Kind kind);

class CoordTrace {
 public:
  void record(SimTime time, RankId rank, CoordEvent::Kind kind, std::uint64_t a = 0,
              std::uint64_t b = 0, std::uint64_t c = 0) {
    events_.push_back(CoordEvent{time, next_seq_++, rank, kind, a, b, c});
  }

  const std::vector<CoordEvent>& events() const { return events_; }

 private:
  std::uint64_t next_seq_ = 0;
  std::vector<CoordEvent> events_;
};

}  // namespace trigsim
