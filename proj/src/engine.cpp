// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/engine.hpp"

#include <cstdio>

namespace trigsim {

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::DoorbellWrite: return "doorbell-write";
    case EventKind::NicCheckTriggers: return "nic-check-triggers";
    case EventKind::NicExecute: return "nic-execute";
    case EventKind::WireDelivery: return "wire-delivery";
    case EventKind::CompletionWriteback: return "completion-writeback";
    case EventKind::HostPollTick: return "host-poll-tick";
    case EventKind::ActorResume: return "actor-resume";
    case EventKind::FlushComplete: return "flush-complete";
    case EventKind::HostMemoryWrite: return "host-memory-write";
  }
  return "unknown";
}

const char* to_string(SimError err) {
  switch (err) {
    case SimError::None: return "ok";
    case SimError::PastTime: return "PastTime";
    case SimError::OutOfBounds: return "OutOfBounds";
    case SimError::DwqFull: return "DwqFull";
    case SimError::ThresholdOverflow: return "ThresholdOverflow";
    case SimError::CounterOverflow: return "CounterOverflow";
    case SimError::NonMonotoneWrite: return "NonMonotoneWrite";
    case SimError::NotProgressedYet: return "NotProgressedYet";
    case SimError::HandoffViolation: return "HandoffViolation";
    case SimError::MailboxFull: return "MailboxFull";
    case SimError::SendQueueFull: return "SendQueueFull";
    case SimError::NotOwner: return "NotOwner";
    case SimError::InvalidRankCount: return "InvalidRankCount";
    case SimError::InvalidState: return "InvalidState";
  }
  return "unknown";
}

const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::EQ: return "EQ";
    case CmpOp::NE: return "NE";
    case CmpOp::GT: return "GT";
    case CmpOp::GE: return "GE";
    case CmpOp::LT: return "LT";
    case CmpOp::LE: return "LE";
  }
  return "??";
}

bool cmp_from_string(const std::string& s, CmpOp& out) {
  if (s == "EQ" || s == "==") out = CmpOp::EQ;
  else if (s == "NE" || s == "!=") out = CmpOp::NE;
  else if (s == "GT" || s == ">") out = CmpOp::GT;
  else if (s == "GE" || s == ">=") out = CmpOp::GE;
  else if (s == "LT" || s == "<") out = CmpOp::LT;
  else if (s == "LE" || s == "<=") out = CmpOp::LE;
  else return false;
  return true;
}

void TraceLog::write_text(std::ostream& os) const {
  for (const TraceEvent& ev : events_) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%llu\t%s\trank=%d a=%llu b=%llu c=%llu",
                  static_cast<unsigned long long>(ev.time), to_string(ev.kind),
                  ev.rank == kNoRank ? -1 : static_cast<int>(ev.rank),
                  static_cast<unsigned long long>(ev.a), static_cast<unsigned long long>(ev.b),
                  static_cast<unsigned long long>(ev.c));
    os << buf << '\n';
  }
}

const char* to_string(CoordEvent::Kind kind) {
  using K = CoordEvent::Kind;
  switch (kind) {
    case K::BarrierEnter: return "barrier-enter";
    case K::BarrierExit: return "barrier-exit";
    case K::DeviceTrigger: return "device-trigger";
    case K::ReadinessWrite: return "readiness-write";
    case K::SignalObserved: return "signal-observed";
    case K::FallbackIssued: return "fallback-issued";
    case K::AmSent: return "am-sent";
    case K::AmDispatched: return "am-dispatched";
    case K::QueueWork: return "queue-work";
    case K::MonitorTick: return "monitor-tick";
    case K::FlushStart: return "flush-start";
  }
  return "unknown";
}

Result<EventId> Engine::schedule(SimTime time, EventKind kind, std::function<void()> fn,
                                 RankId rank, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                                 bool daemon) {
  if (time < now_) return SimError::PastTime;
  const EventId id = next_seq_++;
  if (!daemon) ++pending_non_daemon_;
  queue_.push(Item{time, id, kind, rank, a, b, c, daemon, std::move(fn)});
  return id;
}

EventId Engine::schedule_in(SimTime delay, EventKind kind, std::function<void()> fn, RankId rank,
                            std::uint64_t a, std::uint64_t b, std::uint64_t c, bool daemon) {
  return schedule(now_ + delay, kind, std::move(fn), rank, a, b, c, daemon).value();
}

Status Engine::cancel(EventId id) {
  if (id >= next_seq_) return Status::Fail(SimError::InvalidState);
  cancelled_.insert(id);
  return Status::Ok();
}

Engine::RunStatus Engine::run_until(SimTime limit) {
  while (!queue_.empty()) {
    if (stop_) return RunStatus::Stopped;
    const Item& top = queue_.top();
    if (top.time > limit) {
      now_ = limit;
      return RunStatus::LimitReached;
    }
    Item item{top.time, top.seq, top.kind, top.rank, top.a, top.b, top.c, top.daemon,
              std::move(const_cast<Item&>(top).fn)};
    queue_.pop();
    if (!item.daemon) --pending_non_daemon_;
    if (cancelled_.erase(item.seq) > 0) continue;
    now_ = item.time;
    ++processed_;
    trace_.record(TraceEvent{item.time, item.seq, item.kind, item.rank, item.a, item.b, item.c});
    item.fn();
  }
  if (stop_) return RunStatus::Stopped;
  return waiters_ > 0 ? RunStatus::Deadlock : RunStatus::Idle;
}

}  // namespace trigsim
