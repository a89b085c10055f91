// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <limits>
#include <vector>

#include "trigsim/coordination.hpp"
#include "trigsim/device.hpp"
#include "trigsim/engine.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/nic_ib.hpp"

using namespace trigsim;

namespace {

constexpr SimTime kForever = std::numeric_limits<SimTime>::max() / 2;

struct Rig {
  Engine engine;
  MemoryPool memory;
  Layout layout;
  Fabric fabric{engine, memory, 100};
  CoordContext ctx;
  IbTransport transport;
  IbBackend backend{engine, memory, ctx, layout, transport};

  explicit Rig(IbParams params = {}, std::uint32_t P = 2, std::uint32_t ring = 8)
      : layout(Layout::compute(P, ring, 0)), transport(engine, fabric, params) {
    for (std::uint32_t r = 0; r < P; ++r)
      memory.add_rank(layout.device_bytes, layout.host_bytes);
    ctx.init(engine, memory, P);
    ctx.am = AmState(layout, P);
  }

  std::vector<std::uint8_t> word(std::uint64_t v) {
    std::vector<std::uint8_t> b(8);
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return b;
  }
};

}  // namespace

TEST_CASE("each direction is one queue pair, claimed once") {
  Rig rig;
  Result<QpId> q01 = rig.transport.create_qp(0, 1);
  REQUIRE(q01.ok());
  CHECK(rig.transport.create_qp(0, 1).error() == SimError::InvalidState);
  Result<QpId> q10 = rig.transport.create_qp(1, 0);
  REQUIRE(q10.ok());
  CHECK(q10.value() != q01.value());
  CHECK(rig.transport.qp_count() == 2);
  CHECK(rig.transport.find_qp(0, 1).value() == q01.value());
  CHECK(rig.transport.find_qp(1, 0).value() == q10.value());
  CHECK(rig.transport.find_qp(1, 1).error() == SimError::OutOfBounds);
}

TEST_CASE("only the owning rank may post") {
  Rig rig;
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr dst{1, Space::Device, 0};
  Result<std::uint64_t> r =
      rig.transport.post_write_imm(q, 1, rig.word(5), dst, {}, false);
  CHECK(!r.ok());
  CHECK(r.error() == SimError::NotOwner);
  CHECK(rig.transport.post_write_imm(99, 0, rig.word(5), dst, {}, false).error() ==
        SimError::OutOfBounds);
}

TEST_CASE("the send ring bounds posted-but-undelivered work") {
  IbParams p;
  p.send_ring = 2;
  Rig rig(p);
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr dst{1, Space::Device, 0};
  CHECK(rig.transport.post_write_imm(q, 0, rig.word(1), dst, {}, false).value() == 1);
  CHECK(rig.transport.post_write_imm(q, 0, rig.word(2), dst, {}, false).value() == 2);
  CHECK(rig.transport.post_write_imm(q, 0, rig.word(3), dst, {}, false).error() ==
        SimError::SendQueueFull);
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  // Deliveries free the ring.
  CHECK(rig.transport.qp(q).delivered == 2);
  CHECK(rig.transport.post_write_imm(q, 0, rig.word(3), dst, {}, false).value() == 3);
}

TEST_CASE("a posted write lands after build, doorbell, and wire") {
  Rig rig;  // build 300, doorbell 100, wire 100
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr dst{1, Space::Device, 64};
  REQUIRE(rig.transport.post_write_imm(q, 0, rig.word(0x77), dst, {}, false).ok());
  CHECK(rig.engine.run_until(499) == Engine::RunStatus::LimitReached);
  CHECK(rig.memory.read_u64(dst).value() == 0);
  CHECK(rig.engine.run_until(500) == Engine::RunStatus::Idle);
  CHECK(rig.memory.read_u64(dst).value() == 0x77);
}

TEST_CASE("put-style posts read their source at NIC execution time") {
  Rig rig;
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr src{0, Space::Device, 0};
  const MemAddr dst{1, Space::Device, 0};
  REQUIRE(rig.memory.write_u64(src, 1).ok());
  REQUIRE(rig.transport.post_write(q, 0, src, dst, 8, {}, false).ok());
  // Updated before the NIC fetches the descriptor (t = 400): new data wins.
  rig.engine.schedule(200, EventKind::HostMemoryWrite,
                      [&]() { REQUIRE(rig.memory.write_u64(src, 2).ok()); });
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(rig.memory.read_u64(dst).value() == 2);
}

TEST_CASE("signaled completions flow through the owner-bit CQ") {
  Rig rig;
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr dst{1, Space::Device, 0};
  CHECK(rig.transport.cq_poll(q).value().empty());  // lap-0 parity matches nothing
  REQUIRE(rig.transport.post_write_imm(q, 0, rig.word(1), dst, {}, true).ok());
  REQUIRE(rig.transport.post_write_imm(q, 0, rig.word(2), dst, {}, false).ok());
  REQUIRE(rig.transport.post_write_imm(q, 0, rig.word(3), dst, {}, true).ok());
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  Result<std::vector<CompletionEntry>> got = rig.transport.cq_poll(q);
  REQUIRE(got.ok());
  REQUIRE(got.value().size() == 2);  // the unsignaled post leaves no entry
  CHECK(got.value()[0].wqe == 1);    // oldest first
  CHECK(got.value()[1].wqe == 3);
  CHECK(got.value()[0].time == 500);
  CHECK(rig.transport.cq_poll(q).value().empty());  // drained
  CHECK(rig.transport.cq_poll(42).error() == SimError::OutOfBounds);
}

TEST_CASE("the owner bit flips per lap so stale entries read as empty") {
  IbParams p;
  p.cq_ring = 2;
  Rig rig(p);
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr dst{1, Space::Device, 0};
  auto send_batch = [&](int n) {
    for (int i = 0; i < n; ++i)
      REQUIRE(rig.transport.post_write_imm(q, 0, rig.word(1), dst, {}, true).ok());
    CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  };
  send_batch(2);  // lap 0: owner bits 0
  Result<std::vector<CompletionEntry>> lap0 = rig.transport.cq_poll(q);
  REQUIRE(lap0.value().size() == 2);
  CHECK(lap0.value()[0].owner_bit == 0);
  send_batch(2);  // lap 1: owner bits 1, overwriting in place
  Result<std::vector<CompletionEntry>> lap1 = rig.transport.cq_poll(q);
  REQUIRE(lap1.value().size() == 2);
  CHECK(lap1.value()[0].owner_bit == 1);
  CHECK(lap1.value()[0].wqe == 3);
  CHECK(rig.transport.cq_poll(q).value().empty());
  CHECK(rig.transport.qp(q).cq_overruns == 0);
}

TEST_CASE("a full CQ drops the completion and counts the overrun") {
  IbParams p;
  p.cq_ring = 2;
  Rig rig(p);
  QpId q = rig.transport.create_qp(0, 1).value();
  const MemAddr dst{1, Space::Device, 0};
  for (int i = 0; i < 3; ++i)
    REQUIRE(rig.transport.post_write_imm(q, 0, rig.word(1), dst, {}, true).ok());
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(rig.transport.qp(q).cq_overruns == 1);
  CHECK(rig.transport.qp(q).delivered == 3);  // the write itself still landed
  Result<std::vector<CompletionEntry>> got = rig.transport.cq_poll(q);
  REQUIRE(got.value().size() == 2);
  CHECK(got.value()[0].wqe == 1);
  CHECK(got.value()[1].wqe == 2);  // wqe 3's completion was the one dropped
}

TEST_CASE("the backend refuses triggered-only verbs and creates QPs lazily") {
  Rig rig;
  CHECK(rig.backend.gpu_initiated());
  DeviceActor a(0, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  CHECK(rig.backend.raw_trigger(a, 0, 1).err == SimError::InvalidState);
  int called = 0;
  CHECK(rig.backend.halo_exchange(a, 0, [&]() { ++called; }).err == SimError::InvalidState);
  CHECK(called == 0);
  CHECK(rig.transport.qp_count() == 0);

  Program prog{StepIbPut{1, 0, 0, 8, false, 0}};
  a.set_program(&prog);
  a.start();
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(a.state() == DeviceActor::State::Done);
  CHECK(rig.transport.qp_count() == 1);  // auto-created on first use
}

TEST_CASE("ib_put returns at build time; the flag lands with the data") {
  Rig rig;
  REQUIRE(rig.memory.write_u64(MemAddr{0, Space::Device, 0}, 0xfeed).ok());
  Program prog{StepIbPut{1, 0, 128, 8, true, 6}};
  DeviceActor a(0, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  a.set_program(&prog);
  a.start();
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(a.state() == DeviceActor::State::Done);
  CHECK(a.finished_at() == 300);  // the issuing context pays only the build
  CHECK(rig.memory.read_u64(MemAddr{1, Space::Device, 128}).value() == 0xfeed);
  CHECK(rig.memory.read_u64(rig.layout.sig_addr(1, 6)).value() == 1);
}

TEST_CASE("quiet waits for a put's delivery, not just its post") {
  Rig rig;
  Program prog{StepIbPut{1, 0, 0, 8, false, 0}, StepQuiet{}, StepCompute{1}};
  DeviceActor a(0, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  a.set_program(&prog);
  a.start();
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(a.state() == DeviceActor::State::Done);
  // put delivered at 500; quiet released then; +1 compute.
  CHECK(a.finished_at() == 501);
}

TEST_CASE("am halves are posted in order and stamped in the log") {
  Rig rig;
  Program p0{StepAmSend{1, 3, {0xab}}};
  Program p1{StepAmPoll{1}};
  DeviceActor a0(0, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  DeviceActor a1(1, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  a0.set_program(&p0);
  a1.set_program(&p1);
  a0.start();
  a1.start();
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(a0.state() == DeviceActor::State::Done);
  CHECK(a1.state() == DeviceActor::State::Done);
  REQUIRE(rig.ctx.am_log.sends().size() == 1);
  const AmSendRecord& s = rig.ctx.am_log.sends()[0];
  CHECK(s.issued_at == 0);
  // [DERIVED] body posted at 0 -> 500; seq built after the body -> 300 + 500;
  // the sender's step completes at two build latencies.
  CHECK(s.body_delivered == 500);
  CHECK(s.seq_delivered == 800);
  CHECK(a0.finished_at() == 600);
  CHECK(s.dispatched);
  REQUIRE(rig.ctx.am_log.dispatches().size() == 1);
  CHECK(rig.ctx.am_log.dispatches()[0].time == 800);
  CHECK(rig.ctx.am_log.dispatches()[0].args == std::vector<std::uint8_t>{0xab});
}

TEST_CASE("am sends hit MailboxFull when the ring has no credits") {
  Rig rig(IbParams{}, 2, /*ring=*/1);
  Program p0{StepAmSend{1, 1, {}}, StepAmSend{1, 1, {}}};
  DeviceActor a0(0, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  a0.set_program(&p0);
  a0.start();
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  // Nobody polls, so the single credit never returns; the second send faults.
  CHECK(a0.state() == DeviceActor::State::Faulted);
  CHECK(a0.fault_error() == SimError::MailboxFull);
}

TEST_CASE("barriers run as dissemination epochs over queue pairs") {
  Rig rig;
  Program prog{StepBarrierAll{}, StepBarrierAll{}};
  DeviceActor a0(0, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  DeviceActor a1(1, rig.engine, rig.memory, rig.ctx, rig.backend, rig.layout);
  a0.set_program(&prog);
  a1.set_program(&prog);
  a0.start();
  a1.start();
  CHECK(rig.engine.run_until(kForever) == Engine::RunStatus::Idle);
  CHECK(a0.state() == DeviceActor::State::Done);
  CHECK(a0.barriers_done() == 2);
  CHECK(a1.barriers_done() == 2);
  // Epochs land in both slots' round words.
  CHECK(rig.memory.read_u64(rig.layout.barrier_sig_addr(0, 0, 0)).value() == 1);
  CHECK(rig.memory.read_u64(rig.layout.barrier_sig_addr(0, 1, 0)).value() == 2);
  // No triggered-backend artifacts on this substrate.
  for (const CoordEvent& ev : rig.ctx.coord.events()) {
    CHECK(ev.kind != CoordEvent::Kind::DeviceTrigger);
    CHECK(ev.kind != CoordEvent::Kind::QueueWork);
    CHECK(ev.kind != CoordEvent::Kind::ReadinessWrite);
  }
}
