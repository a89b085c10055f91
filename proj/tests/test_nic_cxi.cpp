// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdint>
#include <vector>

#include "trigsim/engine.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/nic_cxi.hpp"

using namespace trigsim;

namespace {

struct Rig {
  Engine engine;
  MemoryPool memory;
  Fabric fabric;
  CxiNic nic;
  HostCapability host;

  explicit Rig(NicParams params = {}, SimTime wire = 50)
      : fabric(engine, memory, wire), nic(0, engine, memory, fabric, params) {
    memory.add_rank(4096, 256);
    memory.add_rank(4096, 256);
    memory.add_rank(4096, 256);
  }

  void drain() { CHECK(engine.run_until(~0ull / 2) != Engine::RunStatus::Deadlock); }
};

SignalOp sig_to(RankId peer, std::uint64_t offset, std::uint64_t value) {
  return SignalOp{peer, MemAddr{peer, Space::Device, offset}, value};
}

}  // namespace

TEST_CASE("barrier rounds is ceil(log2 P)") {
  CHECK(barrier_rounds(0) == 0);
  CHECK(barrier_rounds(1) == 0);
  CHECK(barrier_rounds(2) == 1);
  CHECK(barrier_rounds(3) == 2);
  CHECK(barrier_rounds(4) == 2);
  CHECK(barrier_rounds(5) == 3);
  CHECK(barrier_rounds(8) == 3);
  CHECK(barrier_rounds(64) == 6);
  CHECK(barrier_rounds(65) == 7);
  CHECK(barrier_rounds(256) == 8);
  CHECK(barrier_rounds(1024) == 10);
  CHECK(barrier_rounds(4096) == 12);
}

TEST_CASE("pre-stageable barrier budget matches the closed form") {
  // [DERIVED] min(floor(256/R), floor(2047/2R)) at the default NIC size.
  CHECK(max_prestaged_barriers(64, 256, 2047).value() == 42);
  CHECK(max_prestaged_barriers(256, 256, 2047).value() == 32);
  CHECK(max_prestaged_barriers(1024, 256, 2047).value() == 25);
  CHECK(max_prestaged_barriers(4096, 256, 2047).value() == 21);
  // [DERIVED] small-P corners: R=1 -> slot-bound 256; R=2 -> 128.
  CHECK(max_prestaged_barriers(2, 256, 2047).value() == 256);
  CHECK(max_prestaged_barriers(3, 256, 2047).value() == 128);
  // [DERIVED] counter-increment-bound case: floor(2047/2) = 1023 < dwq.
  CHECK(max_prestaged_barriers(2, 100000, 2047).value() == 1023);
  CHECK(max_prestaged_barriers(1, 256, 2047).error() == SimError::InvalidRankCount);
  CHECK(max_prestaged_barriers(0, 256, 2047).error() == SimError::InvalidRankCount);
}

TEST_CASE("queue_work validates in a fixed order") {
  NicParams p;
  p.dwq_capacity = 1;
  p.counter_max = 5;
  Rig rig(p);
  CounterId c = rig.nic.alloc_counter();
  REQUIRE(rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 1), {}).ok());

  // Bad counter outranks the full queue; so does a hopeless threshold.
  CHECK(rig.nic.queue_work(rig.host, 0, 99, 1, sig_to(1, 0, 1), {}).error() ==
        SimError::OutOfBounds);
  CHECK(rig.nic.queue_work(rig.host, 0, c, 6, sig_to(1, 0, 1), {}).error() ==
        SimError::ThresholdOverflow);
  CHECK(rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 1), {}).error() == SimError::DwqFull);
}

TEST_CASE("counter increment budget refuses before the queue does") {
  NicParams p;
  p.dwq_capacity = 64;
  p.counter_max = 5;  // budget for two entries (4 incr), not three
  Rig rig(p);
  CounterId c = rig.nic.alloc_counter();
  REQUIRE(rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 1), {}).ok());
  REQUIRE(rig.nic.queue_work(rig.host, 0, c, 2, sig_to(1, 8, 1), {}).ok());
  CHECK(rig.nic.incr_outstanding() == 4);
  CHECK(rig.nic.queue_work(rig.host, 0, c, 3, sig_to(1, 16, 1), {}).error() ==
        SimError::CounterOverflow);
  CHECK(rig.nic.slots_in_use() == 2);
  CHECK(rig.nic.queued_total() == 2);
}

TEST_CASE("doorbell validates synchronously") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  CHECK(rig.nic.doorbell_write(42, 1, 0).err == SimError::OutOfBounds);
  CHECK(rig.nic.doorbell_write(c, 2048, 0).err == SimError::CounterOverflow);
  CHECK(rig.nic.doorbell_write(c, 5, 0).ok());
  // Monotonicity is checked against the last issued value, not the applied
  // one — the 5 above has not landed yet.
  CHECK(rig.nic.doorbell_write(c, 3, 0).err == SimError::NonMonotoneWrite);
  CHECK(rig.nic.doorbell_write(c, 5, 0).ok());  // equal re-issue is legal
  rig.drain();
  CHECK(rig.nic.counter_value(c).value() == 5);
}

TEST_CASE("doorbells release by threshold order with stable ties") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  std::vector<EntryId> order;
  rig.nic.set_release_hook([&](const DeferredWorkEntry& e) { order.push_back(e.id); });
  EntryId a = rig.nic.queue_work(rig.host, 0, c, 3, sig_to(1, 0, 1), {}).value();
  EntryId b = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 8, 1), {}).value();
  EntryId d = rig.nic.queue_work(rig.host, 0, c, 2, sig_to(1, 16, 1), {}).value();
  EntryId e = rig.nic.queue_work(rig.host, 0, c, 2, sig_to(1, 24, 1), {}).value();
  REQUIRE(rig.nic.doorbell_write(c, 3, 0).ok());
  rig.drain();
  CHECK(order == std::vector<EntryId>{b, d, e, a});
}

TEST_CASE("a partial doorbell releases only ripe entries") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  EntryId lo = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 1), {}).value();
  EntryId hi = rig.nic.queue_work(rig.host, 0, c, 4, sig_to(1, 8, 1), {}).value();
  REQUIRE(rig.nic.doorbell_write(c, 2, 0).ok());
  rig.drain();
  CHECK(rig.nic.entry(lo)->state == EntryState::Released);
  CHECK(rig.nic.entry(hi)->state == EntryState::Armed);
  CHECK(rig.nic.armed_now(0) == 1);
  REQUIRE(rig.nic.doorbell_write(c, 4, 0).ok());
  rig.drain();
  CHECK(rig.nic.entry(hi)->state == EntryState::Released);
  CHECK(rig.nic.armed_now(0) == 0);
  CHECK(rig.nic.armed_high_water(0) == 2);
}

TEST_CASE("arming against an already satisfied counter releases immediately") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  REQUIRE(rig.nic.doorbell_write(c, 5, 0).ok());
  rig.drain();
  EntryId e = rig.nic.queue_work(rig.host, 0, c, 3, sig_to(1, 0, 1), {}).value();
  CHECK(rig.nic.entry(e)->state == EntryState::Released);
  CHECK(rig.nic.armed_now(0) == 0);
  CHECK(rig.nic.armed_high_water(0) == 1);  // it was armed for an instant
  rig.drain();
  CHECK(rig.memory.read_u64(MemAddr{1, Space::Device, 0}).value() == 1);
}

TEST_CASE("trigger-to-delivery latency adds up stage by stage") {
  NicParams p;
  p.doorbell_latency = 100;
  p.nic_exec_latency = 7;
  Rig rig(p, /*wire=*/50);
  CounterId c = rig.nic.alloc_counter();
  EntryId e = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 9), {}).value();
  REQUIRE(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();
  // [DERIVED] doorbell 100 -> release; +7 exec -> wire issue; +50 landing.
  CHECK(rig.nic.entry(e)->released_at == 100);
  CHECK(rig.nic.entry(e)->completed_at == 157);
  CHECK(rig.memory.read_u64(MemAddr{1, Space::Device, 0}).value() == 9);
}

TEST_CASE("put entries DMA their source at execution time") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  const MemAddr src{0, Space::Device, 0};
  const MemAddr dst{1, Space::Device, 0};
  REQUIRE(rig.memory.write_u64(src, 0xaaaa).ok());
  REQUIRE(rig.nic.queue_work(rig.host, 0, c, 1, PutOp{1, src, dst, 8}, {}).ok());
  // The entry sits armed while the producer finishes writing the buffer.
  REQUIRE(rig.memory.write_u64(src, 0xbbbb).ok());
  REQUIRE(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();
  CHECK(rig.memory.read_u64(dst).value() == 0xbbbb);
}

TEST_CASE("am entries deliver body before sequence word") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  const MemAddr body_dst{1, Space::Device, 256};
  const MemAddr seq_dst{1, Space::Device, 248};
  const MemAddr flag{1, Space::Device, 512};
  int body_marks = 0;
  std::uint64_t body_at_seq_wake = 0;
  (void)rig.memory.watch_u64(seq_dst, CmpOp::GE, 7, [&]() {
    body_at_seq_wake = rig.memory.read_u64(body_dst).value();
  });
  AmWriteOp am{1, body_dst, {0x11, 0x22, 0x33}, seq_dst, 7, [&]() { ++body_marks; }};
  WritebackSpec wb;
  wb.device_flag = flag;
  REQUIRE(rig.nic.queue_work(rig.host, 0, c, 1, NicOp{am}, wb).ok());
  REQUIRE(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();
  CHECK(body_marks == 1);
  CHECK(body_at_seq_wake == 0x332211);  // body visible when the seq lands
  CHECK(rig.memory.read_u64(flag).value() == 1);
  CHECK(rig.nic.completed_total() == 1);
}

TEST_CASE("records are consumed once and gate retirement") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  EntryId e = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 1), {}).value();

  // Armed: nothing to poll, no retirement.
  CHECK(rig.nic.host_progress_poll(rig.host).empty());
  CHECK(rig.nic.retire(rig.host, e).err == SimError::NotProgressedYet);

  REQUIRE(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();
  // Completed but unpolled: device-visible completion is not progress.
  CHECK(rig.nic.retire(rig.host, e).err == SimError::NotProgressedYet);

  std::vector<CompletionRecord> recs = rig.nic.host_progress_poll(rig.host);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].entry == e);
  CHECK(recs[0].completion_time == rig.nic.entry(e)->completed_at);
  CHECK(rig.nic.host_progress_poll(rig.host).empty());  // consume-once

  CHECK(rig.nic.retire(rig.host, e).ok());
  CHECK(rig.nic.retire(rig.host, e).err == SimError::InvalidState);  // gone
  CHECK(rig.nic.slots_in_use() == 0);
  CHECK(rig.nic.incr_outstanding() == 0);
  CHECK(rig.nic.retired_total() == 1);
}

TEST_CASE("cancel_armed reclaims budget but only for armed entries") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  EntryId armed = rig.nic.queue_work(rig.host, 0, c, 5, sig_to(1, 0, 1), {}).value();
  EntryId released = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 8, 1), {}).value();
  REQUIRE(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();

  CHECK(rig.nic.cancel_armed(rig.host, released).err == SimError::InvalidState);
  CHECK(rig.nic.cancel_armed(rig.host, 999).err == SimError::InvalidState);
  CHECK(rig.nic.cancel_armed(rig.host, armed).ok());
  CHECK(rig.nic.entry(armed) == nullptr);
  CHECK(rig.nic.slots_in_use() == 1);  // the released one still holds a slot
  CHECK(rig.nic.armed_now(0) == 0);
  // A later doorbell ride past the old threshold must not resurrect it.
  REQUIRE(rig.nic.doorbell_write(c, 5, 0).ok());
  rig.drain();
  CHECK(rig.nic.released_total() == 1);
}

TEST_CASE("counter_reset needs a quiet counter and clears issue state") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  CHECK(rig.nic.counter_reset(rig.host, 42).err == SimError::OutOfBounds);
  EntryId e = rig.nic.queue_work(rig.host, 0, c, 3, sig_to(1, 0, 1), {}).value();
  CHECK(rig.nic.counter_reset(rig.host, c).err == SimError::InvalidState);
  REQUIRE(rig.nic.cancel_armed(rig.host, e).ok());

  REQUIRE(rig.nic.doorbell_write(c, 7, 0).ok());
  rig.drain();
  REQUIRE(rig.nic.counter_reset(rig.host, c).ok());
  CHECK(rig.nic.counter_value(c).value() == 0);
  // last_issued was cleared too: small values are monotone again.
  CHECK(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();
  CHECK(rig.nic.counter_value(c).value() == 1);
}

TEST_CASE("flush retires landed work, keeps armed work, zeroes counters") {
  NicParams p;
  p.flush_cost = 500;
  Rig rig(p);
  CounterId c = rig.nic.alloc_counter();
  EntryId armed = rig.nic.queue_work(rig.host, 0, c, 9, sig_to(1, 0, 1), {}).value();
  EntryId landed = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 8, 1), {}).value();
  EntryId polled = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 16, 1), {}).value();
  REQUIRE(rig.nic.doorbell_write(c, 2, 0).ok());
  rig.drain();
  (void)rig.nic.host_progress_poll(rig.host);  // consume both records
  // Re-create an unconsumed record state for `landed` only: poll consumed
  // both, so instead verify flush handles consumed-but-unretired entries.
  CHECK(rig.nic.entry(landed)->record_consumed);
  CHECK(rig.nic.entry(polled)->record_consumed);

  const SimTime before = rig.engine.now();
  rig.nic.flush(rig.host, nullptr);
  CHECK(rig.nic.flush_count() == 1);  // charged at the call
  rig.drain();
  CHECK(rig.engine.now() == before + 500);

  CHECK(rig.nic.entry(landed) == nullptr);
  CHECK(rig.nic.entry(polled) == nullptr);
  REQUIRE(rig.nic.entry(armed) != nullptr);  // armed entries survive
  CHECK(rig.nic.entry(armed)->state == EntryState::Armed);
  CHECK(rig.nic.counter_value(c).value() == 0);
  CHECK(rig.nic.slots_in_use() == 1);
  CHECK(rig.nic.host_progress_poll(rig.host).empty());
  // The armed survivor still fires once its (reset) counter climbs again.
  REQUIRE(rig.nic.doorbell_write(c, 9, 0).ok());
  rig.drain();
  CHECK(rig.nic.entry(armed)->state == EntryState::Released);
}

TEST_CASE("flush also retires unconsumed completions") {
  NicParams p;
  p.flush_cost = 500;
  Rig rig(p);
  CounterId c = rig.nic.alloc_counter();
  EntryId e = rig.nic.queue_work(rig.host, 0, c, 1, sig_to(1, 0, 1), {}).value();
  REQUIRE(rig.nic.doorbell_write(c, 1, 0).ok());
  rig.drain();
  CHECK(!rig.nic.entry(e)->record_consumed);  // never polled
  rig.nic.flush(rig.host, nullptr);
  rig.drain();
  CHECK(rig.nic.entry(e) == nullptr);
  CHECK(rig.nic.slots_in_use() == 0);
  CHECK(rig.nic.incr_outstanding() == 0);
}

TEST_CASE("budget conservation holds across a mixed lifecycle") {
  Rig rig;
  CounterId c = rig.nic.alloc_counter();
  for (int i = 0; i < 6; ++i)
    REQUIRE(rig.nic.queue_work(rig.host, i % 2, c, 1 + static_cast<std::uint64_t>(i),
                               sig_to(2, 8 * static_cast<std::uint64_t>(i), 1), {})
                .ok());
  REQUIRE(rig.nic.doorbell_write(c, 3, 0).ok());
  rig.drain();
  for (const CompletionRecord& rec : rig.nic.host_progress_poll(rig.host))
    REQUIRE(rig.nic.retire(rig.host, rec.entry).ok());
  // queued == retired + live, and the incr pool mirrors the slots.
  CHECK(rig.nic.queued_total() == 6);
  CHECK(rig.nic.retired_total() == 3);
  CHECK(rig.nic.slots_in_use() == 3);
  CHECK(rig.nic.incr_outstanding() == 2 * rig.nic.slots_in_use());
  CHECK(rig.nic.dwq_high_water() == 6);
  CHECK(rig.nic.completion_increments() == 3);
  CHECK(rig.nic.armed_high_water(0) == 3);
  CHECK(rig.nic.armed_high_water(1) == 3);
}
