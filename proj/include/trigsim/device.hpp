// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <variant>
#include <vector>

#include "trigsim/coordination.hpp"
#include "trigsim/engine.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

class DeviceActor;

// Device step vocabulary. Deliberately narrow: on the triggered (OFI-like)
// backend nothing here creates NIC work — a doorbell only releases entries
// the host armed. The network-creating steps (am_send posting, ib_put) are
// legal only on the GPU-initiated backend; scenario validation enforces it.
struct StepCompute {
  SimTime duration = 0;
};
struct StepTrigger {
  std::uint32_t counter_ref = 0;  // index into the rank's declared counters
  std::uint64_t value = 0;
};
struct StepWaitUntil {
  std::uint32_t sig_index = 0;
  CmpOp cmp = CmpOp::GE;
  std::uint64_t value = 0;
};
struct StepQuiet {};
struct StepBarrierAll {};
struct StepAmSend {
  RankId peer = 0;
  std::uint32_t handler = 0;
  std::vector<std::uint8_t> args;
};
struct StepAmPoll {
  std::uint64_t target = 0;  // park until lifetime dispatches >= target; 0 = one pass
};
struct StepIbPut {
  RankId peer = 0;
  std::uint64_t src_off = 0;
  std::uint64_t dst_off = 0;
  std::uint64_t size = 0;
  bool has_sig = false;
  std::uint32_t sig_index = 0;  // remote flag incremented at delivery
};
struct StepHaloExchange {};  // one doorbell releasing both halo puts (OFI)
struct StepHostSync {
  SimTime cost = 0;  // modeled host-driven coordination step
};

using DeviceStep =
    std::variant<StepCompute, StepTrigger, StepWaitUntil, StepQuiet, StepBarrierAll, StepAmSend,
                 StepAmPoll, StepIbPut, StepHaloExchange, StepHostSync>;
using Program = std::vector<DeviceStep>;

/// Backend seam between device steps and the communication substrate. The
/// triggered implementation releases host-armed work; the GPU-initiated one
/// posts descriptors directly. `done` continuations are invoked when the
/// protocol action completes (possibly inline for zero-cost paths).
class Backend {
 public:
  virtual ~Backend() = default;
  virtual bool gpu_initiated() const = 0;
  virtual Status raw_trigger(DeviceActor& actor, std::uint32_t counter_ref,
                             std::uint64_t value) = 0;
  virtual void barrier(DeviceActor& actor, std::uint64_t index, std::function<void()> done) = 0;
  virtual Status am_send(DeviceActor& actor, const StepAmSend& step,
                         std::function<void()> done) = 0;
  virtual Status ib_put(DeviceActor& actor, const StepIbPut& step,
                        std::function<void()> done) = 0;
  virtual Status halo_exchange(DeviceActor& actor, std::uint64_t iter,
                               std::function<void()> done) = 0;
};

/// One device actor per rank: the designated control thread. A resumable
/// state machine stepped by engine events; it never blocks the engine —
/// waits park the actor behind a memory watch or a backend continuation.
/// Handler dispatch pushes frames, so active-message handlers reuse the
/// same step vocabulary.
class DeviceActor {
 public:
  enum class State : std::uint8_t { Idle, Running, Waiting, Done, Faulted };

  DeviceActor(RankId rank, Engine& engine, MemoryPool& memory, CoordContext& ctx,
              Backend& backend, const Layout& layout)
      : rank_(rank), engine_(engine), memory_(memory), ctx_(ctx), backend_(backend),
        layout_(layout) {}

  void set_program(const Program* p) { program_ = p; }
  void set_handlers(const std::map<std::uint32_t, Program>* h) { handlers_ = h; }
  void set_fault_sink(std::function<void(RankId, SimError)> f) { fault_sink_ = std::move(f); }

  void start();

  RankId rank() const { return rank_; }
  State state() const { return state_; }
  SimError fault_error() const { return fault_error_; }
  SimTime finished_at() const { return finished_at_; }

  std::uint64_t barriers_done() const { return barriers_done_; }
  std::uint64_t coord_samples() const { return coord_samples_; }
  std::uint64_t coord_total_ns() const { return coord_total_ns_; }
  SimTime coord_max_ns() const { return coord_max_ns_; }
  std::uint64_t am_dispatched() const { return am_dispatched_; }

  /// Park the actor behind an external continuation (backend protocol in
  /// flight). wake() resumes at the current simulated time.
  void park_blocked();
  void wake();
  void fault(SimError err);

  // Sequence counters the backends key generations from.
  std::uint64_t next_barrier_index() { return barrier_index_++; }
  std::uint64_t next_halo_iter() { return halo_iter_++; }
  std::uint64_t next_am_ordinal() { return am_ordinal_++; }

 private:
  struct Frame {
    const Program* prog = nullptr;
    std::size_t pc = 0;
    bool polling = false;
    std::uint64_t poll_target = 0;
    std::uint64_t poll_done = 0;
  };

  void run();
  /// Returns true when the actor parked (or finished/faulted) and the step
  /// loop must stop.
  bool exec_step(const DeviceStep& step);
  bool poll_pass(Frame& frame);
  void park_for(SimTime delay);
  bool dispatch_one(const AmState::Ready& ready);

  RankId rank_;
  Engine& engine_;
  MemoryPool& memory_;
  CoordContext& ctx_;
  Backend& backend_;
  const Layout& layout_;

  const Program* program_ = nullptr;
  const std::map<std::uint32_t, Program>* handlers_ = nullptr;
  std::vector<Frame> frames_;
  State state_ = State::Idle;
  SimError fault_error_ = SimError::None;
  SimTime finished_at_ = 0;
  std::uint64_t wait_token_ = 0;  // stale-wake guard for multi-word parks
  bool blocked_waiter_ = false;

  std::uint64_t barrier_index_ = 0;
  std::uint64_t halo_iter_ = 0;
  std::uint64_t am_ordinal_ = 0;

  std::uint64_t barriers_done_ = 0;
  std::uint64_t coord_samples_ = 0;
  std::uint64_t coord_total_ns_ = 0;
  SimTime coord_max_ns_ = 0;
  SimTime coord_enter_ = 0;
  std::uint64_t am_dispatched_ = 0;

  std::function<void(RankId, SimError)> fault_sink_;
};

}  // namespace trigsim
