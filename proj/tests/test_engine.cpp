// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>
#include <string>
#include <vector>

#include "trigsim/engine.hpp"

using namespace trigsim;

namespace {

EventId must_schedule(Engine& eng, SimTime t, std::function<void()> fn) {
  Result<EventId> r = eng.schedule(t, EventKind::ActorResume, std::move(fn));
  REQUIRE(r.ok());
  return r.value();
}

}  // namespace

TEST_CASE("events run in time order") {
  Engine eng;
  std::vector<int> order;
  must_schedule(eng, 30, [&]() { order.push_back(3); });
  must_schedule(eng, 10, [&]() { order.push_back(1); });
  must_schedule(eng, 20, [&]() { order.push_back(2); });
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(order == std::vector<int>{1, 2, 3});
  // The engine stops at the last processed event, not at the limit.
  CHECK(eng.now() == 30);
}

TEST_CASE("equal timestamps run in insertion order") {
  Engine eng;
  std::vector<int> order;
  must_schedule(eng, 10, [&]() { order.push_back(0); });
  must_schedule(eng, 5, [&]() { order.push_back(9); });
  must_schedule(eng, 10, [&]() { order.push_back(1); });
  must_schedule(eng, 10, [&]() { order.push_back(2); });
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(order == std::vector<int>{9, 0, 1, 2});
}

TEST_CASE("events scheduled from handlers keep FIFO ties") {
  Engine eng;
  std::vector<int> order;
  must_schedule(eng, 10, [&]() {
    order.push_back(0);
    // Same-time events queued mid-tick run after everything already queued
    // for this timestamp.
    must_schedule(eng, 10, [&]() { order.push_back(2); });
  });
  must_schedule(eng, 10, [&]() { order.push_back(1); });
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(order == std::vector<int>{0, 1, 2});
}

TEST_CASE("scheduling in the past is rejected") {
  Engine eng;
  must_schedule(eng, 50, []() {});
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(eng.now() == 50);
  Result<EventId> r = eng.schedule(49, EventKind::ActorResume, []() {});
  CHECK(!r.ok());
  CHECK(r.error() == SimError::PastTime);
  // now() itself is fine.
  CHECK(eng.schedule(50, EventKind::ActorResume, []() {}).ok());
}

TEST_CASE("schedule_in is relative to now") {
  Engine eng;
  SimTime inner = 0;
  must_schedule(eng, 100, [&]() {
    eng.schedule_in(7, EventKind::ActorResume, [&]() { inner = eng.now(); });
  });
  CHECK(eng.run_until(1000) == Engine::RunStatus::Idle);
  CHECK(inner == 107);
}

TEST_CASE("run_until honors the limit and resumes") {
  Engine eng;
  int ran = 0;
  must_schedule(eng, 10, [&]() { ++ran; });
  must_schedule(eng, 200, [&]() { ++ran; });
  CHECK(eng.run_until(100) == Engine::RunStatus::LimitReached);
  CHECK(ran == 1);
  CHECK(eng.now() == 100);
  CHECK(eng.pending_events() == 1);
  CHECK(eng.run_until(300) == Engine::RunStatus::Idle);
  CHECK(ran == 2);
  CHECK(eng.now() == 200);
}

TEST_CASE("cancelled events are skipped entirely") {
  Engine eng;
  int ran = 0;
  EventId a = must_schedule(eng, 10, [&]() { ++ran; });
  must_schedule(eng, 20, [&]() { ++ran; });
  CHECK(eng.pending_events() == 2);
  CHECK(eng.cancel(a).ok());
  CHECK(eng.pending_events() == 1);
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(ran == 1);
  // Cancelled events do not count as processed and do not advance now().
  CHECK(eng.processed_events() == 1);
  CHECK(eng.now() == 20);
}

TEST_CASE("cancelling an unknown id fails") {
  Engine eng;
  CHECK(eng.cancel(123).err == SimError::InvalidState);
}

TEST_CASE("drained queue with waiters is a deadlock") {
  Engine eng;
  must_schedule(eng, 10, []() {});
  eng.add_waiter();
  CHECK(eng.run_until(100) == Engine::RunStatus::Deadlock);
  CHECK(eng.waiters() == 1);
  eng.remove_waiter();
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
}

TEST_CASE("request_stop is sticky and halts before the next event") {
  Engine eng;
  int ran = 0;
  must_schedule(eng, 10, [&]() {
    ++ran;
    eng.request_stop();
  });
  must_schedule(eng, 20, [&]() { ++ran; });
  CHECK(eng.run_until(100) == Engine::RunStatus::Stopped);
  CHECK(ran == 1);
  CHECK(eng.run_until(100) == Engine::RunStatus::Stopped);
  CHECK(ran == 1);
  CHECK(eng.stop_requested());
}

TEST_CASE("daemon events run but are not progress sources") {
  Engine eng;
  int ran = 0;
  Result<EventId> r = eng.schedule(10, EventKind::HostPollTick, [&]() { ++ran; }, kNoRank, 0, 0,
                                   0, /*daemon=*/true);
  REQUIRE(r.ok());
  CHECK(eng.pending_events() == 1);
  CHECK(eng.pending_non_daemon() == 0);
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(ran == 1);

  must_schedule(eng, 20, [&]() { ++ran; });
  CHECK(eng.pending_non_daemon() == 1);
  CHECK(eng.run_until(100) == Engine::RunStatus::Idle);
  CHECK(eng.pending_non_daemon() == 0);
}

TEST_CASE("trace is off by default and deterministic when enabled") {
  auto drive = [](Engine& eng) {
    eng.schedule(5, EventKind::DoorbellWrite, []() {}, 2, 7, 8, 9);
    eng.schedule(5, EventKind::WireDelivery, []() {}, 3, 1, 2, 3);
    eng.schedule(11, EventKind::ActorResume, []() {});
    (void)eng.run_until(100);
  };
  Engine a;
  Engine b;
  a.trace().enable(true);
  b.trace().enable(true);
  drive(a);
  drive(b);
  REQUIRE(a.trace().events().size() == 3);
  std::ostringstream ta;
  std::ostringstream tb;
  a.trace().write_text(ta);
  b.trace().write_text(tb);
  CHECK(ta.str() == tb.str());
  CHECK(ta.str().find("doorbell-write") != std::string::npos);
  CHECK(ta.str().find("rank=2 a=7 b=8 c=9") != std::string::npos);

  Engine off;
  off.schedule(1, EventKind::ActorResume, []() {});
  (void)off.run_until(10);
  CHECK(off.trace().events().empty());
}

TEST_CASE("processed_events counts only executed handlers") {
  Engine eng;
  for (int i = 0; i < 5; ++i) must_schedule(eng, 10 + i, []() {});
  EventId last = must_schedule(eng, 99, []() {});
  CHECK(eng.cancel(last).ok());
  CHECK(eng.run_until(200) == Engine::RunStatus::Idle);
  CHECK(eng.processed_events() == 5);
}
