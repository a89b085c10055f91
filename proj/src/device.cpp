// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/device.hpp"

#include <algorithm>

namespace trigsim {

void DeviceActor::start() {
  state_ = State::Running;
  frames_.push_back(Frame{program_, 0, false, 0, 0});
  engine_.schedule(engine_.now(), EventKind::ActorResume, [this]() { run(); }, rank_);
}

void DeviceActor::park_blocked() {
  state_ = State::Waiting;
  blocked_waiter_ = true;
  engine_.add_waiter();
}

void DeviceActor::wake() {
  if (state_ != State::Waiting) return;
  if (blocked_waiter_) {
    engine_.remove_waiter();
    blocked_waiter_ = false;
  }
  ++wait_token_;
  state_ = State::Running;
  engine_.schedule(engine_.now(), EventKind::ActorResume, [this]() { run(); }, rank_);
}

void DeviceActor::fault(SimError err) {
  if (blocked_waiter_) {
    engine_.remove_waiter();
    blocked_waiter_ = false;
  }
  state_ = State::Faulted;
  fault_error_ = err;
  finished_at_ = engine_.now();
  if (fault_sink_) fault_sink_(rank_, err);
}

void DeviceActor::park_for(SimTime delay) {
  // Timed park: a pending resume event exists, so this is not a blocked
  // waiter for deadlock purposes.
  state_ = State::Waiting;
  ++wait_token_;
  engine_.schedule_in(delay, EventKind::ActorResume,
                      [this]() {
                        state_ = State::Running;
                        run();
                      },
                      rank_);
}

void DeviceActor::run() {
  while (state_ == State::Running) {
    if (frames_.empty()) {
      state_ = State::Done;
      finished_at_ = engine_.now();
      return;
    }
    Frame& top = frames_.back();
    if (top.polling) {
      if (poll_pass(top)) return;
      continue;
    }
    if (top.pc >= top.prog->size()) {
      frames_.pop_back();
      continue;  // parent frame resumes (possibly mid-poll)
    }
    const DeviceStep& step = (*top.prog)[top.pc];
    if (exec_step(step)) return;
  }
}

bool DeviceActor::exec_step(const DeviceStep& step) {
  Frame& top = frames_.back();
  if (const StepCompute* c = std::get_if<StepCompute>(&step)) {
    ++top.pc;
    if (c->duration == 0) return false;
    park_for(c->duration);
    return true;
  }
  if (const StepTrigger* t = std::get_if<StepTrigger>(&step)) {
    Status st = backend_.raw_trigger(*this, t->counter_ref, t->value);
    if (!st.ok()) {
      fault(st.err);
      return true;
    }
    ++top.pc;
    return false;  // triggering is lightweight and asynchronous
  }
  if (const StepWaitUntil* w = std::get_if<StepWaitUntil>(&step)) {
    ++top.pc;
    const MemAddr addr = layout_.sig_addr(rank_, w->sig_index);
    const std::uint64_t token = ++wait_token_;
    Result<bool> sat =
        memory_.watch_u64(addr, w->cmp, w->value, [this, token, addr, w]() {
          if (token != wait_token_ || state_ != State::Waiting) return;
          Result<std::uint64_t> v = memory_.read_u64(addr);
          ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::SignalObserved, addr.offset,
                            v.ok() ? v.value() : 0, 0);
          wake();
        });
    if (!sat.ok()) {
      fault(sat.error());
      return true;
    }
    if (sat.value()) {
      Result<std::uint64_t> v = memory_.read_u64(addr);
      ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::SignalObserved, addr.offset,
                        v.ok() ? v.value() : 0, 0);
      return false;
    }
    park_blocked();
    return true;
  }
  if (std::get_if<StepQuiet>(&step) != nullptr) {
    ++top.pc;
    if (ctx_.outstanding[rank_] == 0) return false;
    park_blocked();
    ctx_.wait_quiet(rank_, [this]() { wake(); });
    return true;
  }
  if (std::get_if<StepBarrierAll>(&step) != nullptr) {
    ++top.pc;
    const std::uint64_t index = next_barrier_index();
    coord_enter_ = engine_.now();
    ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::BarrierEnter, index);
    park_blocked();
    backend_.barrier(*this, index, [this, index]() {
      const SimTime sample = engine_.now() - coord_enter_;
      ++barriers_done_;
      ++coord_samples_;
      coord_total_ns_ += sample;
      coord_max_ns_ = std::max(coord_max_ns_, sample);
      ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::BarrierExit, index);
      wake();
    });
    return true;
  }
  if (const StepAmSend* a = std::get_if<StepAmSend>(&step)) {
    ++top.pc;
    park_blocked();
    Status st = backend_.am_send(*this, *a, [this]() { wake(); });
    if (!st.ok()) {
      fault(st.err);
      return true;
    }
    return true;
  }
  if (const StepAmPoll* p = std::get_if<StepAmPoll>(&step)) {
    top.polling = true;
    top.poll_target = p->target;
    top.poll_done = 0;
    return false;  // loop re-enters via poll_pass
  }
  if (const StepIbPut* ib = std::get_if<StepIbPut>(&step)) {
    ++top.pc;
    park_blocked();
    Status st = backend_.ib_put(*this, *ib, [this]() { wake(); });
    if (!st.ok()) {
      fault(st.err);
      return true;
    }
    return true;
  }
  if (std::get_if<StepHaloExchange>(&step) != nullptr) {
    ++top.pc;
    const std::uint64_t iter = next_halo_iter();
    park_blocked();
    Status st = backend_.halo_exchange(*this, iter, [this]() { wake(); });
    if (!st.ok()) {
      fault(st.err);
      return true;
    }
    return true;
  }
  const StepHostSync& hs = std::get<StepHostSync>(step);
  ++top.pc;
  const std::uint64_t index = next_barrier_index();
  coord_enter_ = engine_.now();
  ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::BarrierEnter, index);
  state_ = State::Waiting;
  ++wait_token_;
  engine_.schedule_in(hs.cost, EventKind::ActorResume,
                      [this, index]() {
                        const SimTime sample = engine_.now() - coord_enter_;
                        ++barriers_done_;
                        ++coord_samples_;
                        coord_total_ns_ += sample;
                        coord_max_ns_ = std::max(coord_max_ns_, sample);
                        ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::BarrierExit,
                                          index);
                        state_ = State::Running;
                        run();
                      },
                      rank_);
  return true;
}

bool DeviceActor::poll_pass(Frame& frame) {
  while (true) {
    std::optional<AmState::Ready> ready = ctx_.am.next_ready(memory_, rank_);
    if (ready.has_value()) {
      ++frame.poll_done;
      const std::size_t depth = frames_.size();
      if (dispatch_one(*ready)) return true;  // fault path
      // A pushed handler frame may have reallocated frames_; `frame` is
      // only touched again when the depth is unchanged.
      if (frames_.size() != depth) return false;
      continue;
    }
    if (frame.poll_target == 0 || am_dispatched_ >= frame.poll_target) {
      frame.polling = false;
      ++frame.pc;
      return false;
    }
    // Park on every sender's next expected sequence word; the first write
    // that satisfies one wakes the actor for another pass.
    const std::uint64_t token = ++wait_token_;
    park_blocked();
    bool registered = false;
    for (RankId s = 0; s < layout_.ranks; ++s) {
      const std::uint64_t e = ctx_.am.expected(rank_, s);
      const MemAddr addr = ctx_.am.expected_slot_addr(rank_, s);
      Result<bool> sat = memory_.watch_u64(addr, CmpOp::GE, e, [this, token]() {
        if (token != wait_token_ || state_ != State::Waiting) return;
        wake();
      });
      if (sat.ok() && sat.value()) {
        // Raced with a delivery between the scan and the watch: resume now.
        wake();
        return true;
      }
      registered = registered || sat.ok();
    }
    (void)registered;
    return true;
  }
}

bool DeviceActor::dispatch_one(const AmState::Ready& ready) {
  const MemAddr slot = ready.slot_addr;
  Result<std::uint64_t> header_word =
      memory_.read_u64(MemAddr{slot.rank, slot.space, slot.offset + 8});
  if (!header_word.ok()) {
    fault(header_word.error());
    return true;
  }
  const AmHeader header = am_unpack_header(header_word.value());
  std::vector<std::uint8_t> args(header.args_len);
  if (header.args_len > 0) {
    Status st = memory_.read(MemAddr{slot.rank, slot.space, slot.offset + 16}, args);
    if (!st.ok()) {
      fault(st.err);
      return true;
    }
  }
  ctx_.am.consume(rank_, ready.sender);
  ++am_dispatched_;
  ctx_.coord.record(engine_.now(), rank_, CoordEvent::Kind::AmDispatched, ready.sender,
                    header.handler, ready.seq);
  AmDispatchRecord rec;
  rec.receiver = rank_;
  rec.sender = ready.sender;
  rec.handler = header.handler;
  rec.seq = ready.seq;
  rec.args = args;
  rec.time = engine_.now();
  ctx_.am_log.record_dispatch(std::move(rec));

  if (handlers_ != nullptr) {
    auto it = handlers_->find(header.handler);
    if (it == handlers_->end()) {
      fault(SimError::InvalidState);
      return true;
    }
    if (!it->second.empty()) {
      frames_.push_back(Frame{&it->second, 0, false, 0, 0});
    }
  }
  return false;
}

}  // namespace trigsim
