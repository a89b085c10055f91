// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/host_runtime.hpp"

#include <algorithm>

namespace trigsim {

// --- shared arming plans --------------------------------------------------

std::vector<PlannedEntry> plan_barrier_gen(const Layout& layout, RankId rank,
                                           std::uint64_t gen) {
  const std::uint32_t R = barrier_rounds(layout.ranks);
  const std::uint32_t slot = static_cast<std::uint32_t>(gen % 2);
  const std::uint64_t epoch = gen + 1;
  std::vector<PlannedEntry> out;
  out.reserve(R);
  for (std::uint32_t r = 0; r < R; ++r) {
    auto [to, from] = DisseminationSchedule::targets(layout.ranks, rank, r);
    (void)from;
    PlannedEntry pe;
    pe.threshold = r + 1;
    pe.op = SignalOp{to, layout.barrier_sig_addr(to, slot, r), epoch};
    out.push_back(std::move(pe));
  }
  return out;
}

std::vector<PlannedEntry> plan_halo_gen(const Layout& layout, RankId rank) {
  const std::uint32_t P = layout.ranks;
  const RankId left = (rank + P - 1) % P;
  const RankId right = (rank + 1) % P;
  std::vector<PlannedEntry> out;
  PlannedEntry to_left;
  to_left.threshold = 1;
  to_left.op = PutOp{left, layout.halo_send_addr(rank), layout.halo_recv_addr(left, 1),
                     layout.halo_bytes};
  to_left.writeback.device_flag = layout.sig_addr(left, 1);
  out.push_back(std::move(to_left));
  PlannedEntry to_right;
  to_right.threshold = 2;
  to_right.op = PutOp{right, layout.halo_send_addr(rank), layout.halo_recv_addr(right, 0),
                      layout.halo_bytes};
  to_right.writeback.device_flag = layout.sig_addr(right, 0);
  out.push_back(std::move(to_right));
  return out;
}

// --- monitor --------------------------------------------------------------

void HostMonitor::add_nic(CxiNic* nic) {
  nics_.push_back(nic);
  nic->set_release_hook([this](const DeferredWorkEntry& e) {
    if (e.owner != kNoRank && e.owner < ctx_.outstanding.size()) ctx_.op_issued(e.owner);
  });
  nic->set_complete_hook([this](const DeferredWorkEntry& e) {
    ++pending_service_;
    if (e.owner != kNoRank && e.owner < ctx_.outstanding.size()) ctx_.op_completed(e.owner);
  });
}

TriggeredStream& HostMonitor::add_stream(TriggeredStream s) {
  s.init_states();
  streams_.push_back(std::make_unique<TriggeredStream>(std::move(s)));
  return *streams_.back();
}

void HostMonitor::start() {
  arm_pass();  // synchronous t = 0 setup: generations 0 and 1, readiness words
  maybe_reschedule();
}

void HostMonitor::tick() {
  ++ticks_;
  if (paused_now()) {
    lag_pass();
    maybe_reschedule();
    return;
  }
  std::size_t serviced = 0;
  for (CxiNic* nic : nics_) {
    std::vector<CompletionRecord> records = nic->host_progress_poll(cap_);
    for (const CompletionRecord& rec : records) on_record(*nic, rec);
    serviced += records.size();
  }
  if (serviced > 0) {
    serviced_total_ += serviced;
    ctx_.coord.record(engine_.now(), kNoRank, CoordEvent::Kind::MonitorTick, serviced);
    // The host is busy per_op_overhead per serviced op; arming resumes at
    // the end of the busy window.
    engine_.schedule_in(static_cast<SimTime>(serviced) * cfg_.per_op_overhead,
                        EventKind::HostPollTick, [this]() { after_service(); }, kNoRank, 1);
    return;
  }
  after_service();
}

void HostMonitor::after_service() {
  arm_pass();
  lag_pass();
  maybe_reschedule();
}

void HostMonitor::on_record(CxiNic& nic, const CompletionRecord& rec) {
  if (pending_service_ > 0) --pending_service_;
  const auto key = std::make_pair(nic.id(), rec.entry);
  auto it = registry_.find(key);
  nic.retire(cap_, rec.entry);  // consumed record + released entry: cannot fail
  if (it == registry_.end()) return;  // raw pre-staged entry: retired, done
  const RegEntry reg = it->second;
  registry_.erase(it);
  if (reg.am_index != kNoAmIndex)
    ctx_.am_log.mark_seq_delivered(reg.am_index, rec.completion_time);
  TriggeredStream& s = *reg.stream;
  if (s.pending[reg.gen] > 0 && --s.pending[reg.gen] == 0)
    s.states[reg.gen] = TriggeredStream::GenState::Done;
}

void HostMonitor::arm_pass() {
  for (auto& sp : streams_) {
    while (try_arm(*sp)) {
    }
  }
}

bool HostMonitor::try_arm(TriggeredStream& s) {
  const std::uint64_t j = s.next_arm;
  if (j >= s.total) return false;
  if (s.states[j] == TriggeredStream::GenState::ArmFailed) return false;  // fallback owns it
  if (j >= cfg_.stage_ahead_slots && !s.gen_terminal(j - cfg_.stage_ahead_slots)) return false;
  if (j >= 2 && s.states[j - 2] == TriggeredStream::GenState::FallbackDone) {
    // The slot's mode word flips back to triggered; the device must be past
    // the host-issued generation (mode read included) first, or its pending
    // doorbells would release this generation's entries early.
    Result<std::uint64_t> req = memory_.read_u64(layout_.requested_addr(s.rank, s.stream_id));
    if (!req.ok() || req.value() < j) return false;
  }
  const std::uint32_t slot = static_cast<std::uint32_t>(j % 2);
  if (j >= 2) {
    if (!s.nic->counter_reset(cap_, s.counters[slot]).ok()) return false;
  }
  std::vector<PlannedEntry> entries = s.plan(j);
  std::vector<EntryId> armed;
  armed.reserve(entries.size());
  for (PlannedEntry& pe : entries) {
    Result<EntryId> r =
        s.nic->queue_work(cap_, s.rank, s.counters[slot], pe.threshold, std::move(pe.op),
                          pe.writeback);
    if (!r.ok()) {
      for (EntryId id : armed) {
        s.nic->cancel_armed(cap_, id);
        registry_.erase(std::make_pair(s.nic->id(), id));
      }
      s.states[j] = TriggeredStream::GenState::ArmFailed;
      return false;
    }
    armed.push_back(r.value());
    registry_[std::make_pair(s.nic->id(), r.value())] = RegEntry{&s, j, pe.am_index};
    ctx_.coord.record(engine_.now(), s.rank, CoordEvent::Kind::QueueWork, r.value());
  }
  s.states[j] = TriggeredStream::GenState::Armed;
  s.pending[j] = static_cast<std::uint32_t>(armed.size());
  memory_.write_u64(layout_.mode_addr(s.rank, s.stream_id, slot), kModeTriggered);
  s.next_arm = j + 1;
  s.readiness = j + 1;
  ++gens_armed_;
  memory_.write_u64(layout_.readiness_addr(s.rank, s.stream_id), j + 1);
  ctx_.coord.record(engine_.now(), s.rank, CoordEvent::Kind::ReadinessWrite, s.stream_id,
                    j + 1);
  return true;
}

void HostMonitor::lag_pass() {
  for (auto& sp : streams_) {
    TriggeredStream& s = *sp;
    if (s.next_arm >= s.total) {
      s.lag_gen = TriggeredStream::kNoGen;
      continue;
    }
    Result<std::uint64_t> req = memory_.read_u64(layout_.requested_addr(s.rank, s.stream_id));
    const std::uint64_t requested = req.ok() ? req.value() : 0;
    if (requested >= s.next_arm + 1) {
      // Device is parked on a generation that is not ready.
      if (s.lag_gen != s.next_arm) {
        s.lag_gen = s.next_arm;
        s.lag_since = engine_.now();
      } else if (engine_.now() - s.lag_since >= cfg_.poll_interval) {
        engage_fallback(s);
      }
    } else {
      s.lag_gen = TriggeredStream::kNoGen;
    }
  }
}

void HostMonitor::engage_fallback(TriggeredStream& s) {
  const std::uint64_t g = s.next_arm;
  const std::uint32_t slot = static_cast<std::uint32_t>(g % 2);
  s.states[g] = TriggeredStream::GenState::FallbackInProgress;
  s.next_arm = g + 1;
  s.readiness = g + 1;
  s.lag_gen = TriggeredStream::kNoGen;
  ++fallbacks_;
  ++ctx_.fallback_count[s.rank];
  memory_.write_u64(layout_.mode_addr(s.rank, s.stream_id, slot), kModeHostIssued);
  ctx_.coord.record(engine_.now(), s.rank, CoordEvent::Kind::FallbackIssued, s.stream_id, g);
  switch (s.kind) {
    case TriggeredStream::Kind::Barrier:
      s.fb_expected[g] = barrier_rounds(layout_.ranks);
      start_barrier_chain(s, g);
      break;
    case TriggeredStream::Kind::Halo:
      s.fb_expected[g] = 2;  // writes arrive via host_issue as the device steps
      break;
    case TriggeredStream::Kind::AmBatch: {
      const std::uint64_t lo = g * s.batch;
      const std::uint64_t hi = std::min<std::uint64_t>(lo + s.batch, s.actions);
      s.fb_expected[g] = static_cast<std::uint32_t>(2 * (hi - lo));
      break;
    }
  }
  // Mode before readiness: the woken device must read HOST_ISSUED.
  memory_.write_u64(layout_.readiness_addr(s.rank, s.stream_id), g + 1);
  ctx_.coord.record(engine_.now(), s.rank, CoordEvent::Kind::ReadinessWrite, s.stream_id,
                    g + 1);
}

namespace {
/// Host-side dissemination replay for one fallback barrier generation:
/// issue round r's signal write (paced through the rank's host worker),
/// wait for this rank's own round-r arrival, continue. The device walker
/// runs concurrently with a no-op sender and observes the same signals.
struct BarrierChain : std::enable_shared_from_this<BarrierChain> {
  HostMonitor& mon;
  Engine& engine;
  MemoryPool& memory;
  Fabric& fabric;
  CoordContext& ctx;
  const Layout& layout;
  TriggeredStream& s;
  std::uint64_t gen;
  std::uint64_t epoch;
  std::uint32_t slot;
  std::uint32_t R;
  RankId rank;

  BarrierChain(HostMonitor& m, Engine& e, MemoryPool& mem, Fabric& f, CoordContext& c,
               const Layout& l, TriggeredStream& stream, std::uint64_t g)
      : mon(m), engine(e), memory(mem), fabric(f), ctx(c), layout(l), s(stream), gen(g),
        epoch(g + 1), slot(static_cast<std::uint32_t>(g % 2)),
        R(barrier_rounds(l.ranks)), rank(stream.rank) {}

  void round(std::uint32_t r) {
    if (r == R) {
      s.states[gen] = TriggeredStream::GenState::FallbackDone;
      return;
    }
    auto self = shared_from_this();
    auto [to, from] = DisseminationSchedule::targets(layout.ranks, rank, r);
    (void)from;
    mon.host_write(rank, [self, r, to]() {
      std::uint8_t buf[8];
      for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(self->epoch >> (8 * i));
      self->fabric.rdma_write_imm(self->rank, to, buf,
                                  self->layout.barrier_sig_addr(to, self->slot, r), {});
      ++self->ctx.fallback_writes;
      ++self->s.fb_issued[self->gen];
      self->await(r);
    });
  }

  void await(std::uint32_t r) {
    auto self = shared_from_this();
    const MemAddr sig = layout.barrier_sig_addr(rank, slot, r);
    auto proceed = [self, r]() { self->round(r + 1); };
    Result<bool> sat = memory.watch_u64(sig, CmpOp::GE, epoch, [self, proceed]() {
      self->engine.remove_waiter();
      self->engine.schedule(self->engine.now(), EventKind::ActorResume, proceed, self->rank);
    });
    if (sat.ok() && sat.value()) {
      proceed();
    } else {
      engine.add_waiter();
    }
  }
};
}  // namespace

void HostMonitor::start_barrier_chain(TriggeredStream& s, std::uint64_t gen) {
  auto chain =
      std::make_shared<BarrierChain>(*this, engine_, memory_, fabric_, ctx_, layout_, s, gen);
  chain->round(0);
}

void HostMonitor::host_issue(TriggeredStream& s, std::uint64_t gen,
                             std::function<void()> write) {
  TriggeredStream* sp = &s;
  host_write(s.rank, [this, sp, gen, write = std::move(write)]() {
    write();
    ++ctx_.fallback_writes;
    if (++sp->fb_issued[gen] == sp->fb_expected[gen])
      sp->states[gen] = TriggeredStream::GenState::FallbackDone;
  });
}

void HostMonitor::host_write(RankId rank, std::function<void()> write) {
  workers_[rank].queue.push_back(std::move(write));
  worker_kick(rank);
}

void HostMonitor::worker_kick(RankId rank) {
  Worker& w = workers_[rank];
  if (w.busy || w.queue.empty()) return;
  w.busy = true;
  engine_.schedule_in(cfg_.per_op_overhead, EventKind::HostMemoryWrite,
                      [this, rank]() {
                        Worker& w2 = workers_[rank];
                        std::function<void()> fn = std::move(w2.queue.front());
                        w2.queue.pop_front();
                        fn();
                        w2.busy = false;
                        worker_kick(rank);
                      },
                      rank);
}

void HostMonitor::maybe_reschedule() {
  bool lag_timer = false;
  for (auto& sp : streams_)
    if (sp->lag_gen != TriggeredStream::kNoGen) lag_timer = true;
  // Nothing non-daemon pending means no future completion, device step, or
  // host write can occur; with no unserviced completions and no lag timer
  // running, another tick could never act. Let the engine drain and give
  // its own verdict (Idle or Deadlock).
  if (engine_.pending_non_daemon() == 0 && pending_service_ == 0 && !lag_timer) return;
  engine_.schedule_in(cfg_.poll_interval, EventKind::HostPollTick, [this]() { tick(); },
                      kNoRank, 0, 0, 0, /*daemon=*/true);
}

// --- triggered backend ----------------------------------------------------

void OfiBackend::with_ready(DeviceActor& actor, TriggeredStream& s, std::uint64_t epoch,
                            std::function<void()> proceed) {
  const RankId rank = actor.rank();
  memory_.write_u64(layout_.requested_addr(rank, s.stream_id), epoch);
  DeviceActor* ap = &actor;
  Result<bool> sat =
      memory_.watch_u64(layout_.readiness_addr(rank, s.stream_id), CmpOp::GE, epoch,
                        [this, ap, rank, proceed]() {
                          engine_.schedule(engine_.now(), EventKind::ActorResume,
                                           [ap, proceed]() {
                                             if (ap->state() == DeviceActor::State::Waiting)
                                               proceed();
                                           },
                                           rank);
                        });
  if (!sat.ok()) {
    actor.fault(sat.error());
    return;
  }
  if (sat.value()) proceed();
}

Status OfiBackend::raw_trigger(DeviceActor& actor, std::uint32_t counter_ref,
                               std::uint64_t value) {
  const RankId rank = actor.rank();
  if (counter_ref >= raw_counters_[rank].size()) return Status::Fail(SimError::OutOfBounds);
  const CounterId c = raw_counters_[rank][counter_ref];
  Status st = nic_of_rank_[rank]->doorbell_write(c, value, rank);
  if (!st.ok()) return st;
  ctx_.coord.record(engine_.now(), rank, CoordEvent::Kind::DeviceTrigger, c, value, 0);
  return Status::Ok();
}

void OfiBackend::barrier(DeviceActor& actor, std::uint64_t index, std::function<void()> done) {
  const RankId rank = actor.rank();
  if (layout_.ranks < 2) {
    done();
    return;
  }
  TriggeredStream* s = barrier_stream_[rank];
  const std::uint64_t g = index;
  const std::uint64_t e = g + 1;
  const std::uint32_t slot = static_cast<std::uint32_t>(g % 2);
  DeviceActor* ap = &actor;
  with_ready(actor, *s, e, [this, ap, s, rank, e, slot, done = std::move(done)]() {
    Result<std::uint64_t> mode = memory_.read_u64(layout_.mode_addr(rank, s->stream_id, slot));
    const bool host_issued = mode.ok() && mode.value() == kModeHostIssued;
    std::function<void(std::uint32_t, RankId, std::function<void()>)> send;
    if (host_issued) {
      send = [](std::uint32_t, RankId, std::function<void()> issued) { issued(); };
    } else {
      send = [this, ap, s, rank, e, slot](std::uint32_t r, RankId peer,
                                          std::function<void()> issued) {
        (void)peer;
        Status hs = s->check_trigger(e);
        if (!hs.ok()) {
          ap->fault(hs.err);
          return;
        }
        Status st = nic_of_rank_[rank]->doorbell_write(s->counters[slot], r + 1, rank);
        if (!st.ok()) {
          ap->fault(st.err);
          return;
        }
        ctx_.coord.record(engine_.now(), rank, CoordEvent::Kind::DeviceTrigger, s->stream_id,
                          r + 1, e);
        issued();
      };
    }
    run_barrier_rounds(engine_, memory_, ctx_, layout_, layout_.ranks, rank, e, slot,
                       std::move(send), done);
  });
}

Status OfiBackend::am_send(DeviceActor& actor, const StepAmSend& step,
                           std::function<void()> done) {
  const RankId rank = actor.rank();
  TriggeredStream* s = am_stream_[rank];
  if (s == nullptr) return Status::Fail(SimError::InvalidState);
  if (ctx_.am.ring_full(rank, step.peer)) return Status::Fail(SimError::MailboxFull);
  const std::uint64_t k = actor.next_am_ordinal();
  if (k >= am_plan_[rank].size()) return Status::Fail(SimError::InvalidState);
  const PlannedSend* ps = &am_plan_[rank][k];
  ctx_.am.note_issued(rank, step.peer);
  const std::uint64_t g = k / s->batch;
  const std::uint64_t e = g + 1;
  const std::uint32_t slot = static_cast<std::uint32_t>(g % 2);
  const std::uint64_t db = (k % s->batch) + 1;
  DeviceActor* ap = &actor;
  with_ready(actor, *s, e,
             [this, ap, s, ps, rank, e, g, slot, db, done = std::move(done)]() {
               Result<std::uint64_t> mode =
                   memory_.read_u64(layout_.mode_addr(rank, s->stream_id, slot));
               const bool host_issued = mode.ok() && mode.value() == kModeHostIssued;
               ctx_.coord.record(engine_.now(), rank, CoordEvent::Kind::AmSent, ps->receiver,
                                 ps->handler, ps->seq);
               ctx_.am_log.set_issued(ps->log_index, engine_.now());
               if (host_issued) {
                 monitor_of_rank_[rank]->host_issue(*s, g, [this, rank, ps]() {
                   Writeback wb;
                   wb.on_complete = [this, ps]() {
                     ctx_.am_log.mark_body_delivered(ps->log_index, engine_.now());
                   };
                   fabric_.rdma_write_imm(rank, ps->receiver, ps->body, ps->body_dst,
                                          std::move(wb));
                 });
                 monitor_of_rank_[rank]->host_issue(*s, g, [this, rank, ps]() {
                   std::uint8_t buf[8];
                   for (int i = 0; i < 8; ++i)
                     buf[i] = static_cast<std::uint8_t>(ps->seq >> (8 * i));
                   Writeback wb;
                   wb.on_complete = [this, ps]() {
                     ctx_.am_log.mark_seq_delivered(ps->log_index, engine_.now());
                   };
                   fabric_.rdma_write_imm(rank, ps->receiver, buf, ps->seq_dst,
                                          std::move(wb));
                 });
               } else {
                 Status hs = s->check_trigger(e);
                 if (!hs.ok()) {
                   ap->fault(hs.err);
                   return;
                 }
                 Status st = nic_of_rank_[rank]->doorbell_write(s->counters[slot], db, rank);
                 if (!st.ok()) {
                   ap->fault(st.err);
                   return;
                 }
                 ctx_.coord.record(engine_.now(), rank, CoordEvent::Kind::DeviceTrigger,
                                   s->stream_id, db, e);
               }
               done();
             });
  return Status::Ok();
}

Status OfiBackend::ib_put(DeviceActor& actor, const StepIbPut& step,
                          std::function<void()> done) {
  (void)actor;
  (void)step;
  (void)done;
  return Status::Fail(SimError::InvalidState);  // GPU-initiated backend only
}

Status OfiBackend::halo_exchange(DeviceActor& actor, std::uint64_t iter,
                                 std::function<void()> done) {
  const RankId rank = actor.rank();
  if (layout_.ranks < 2) {
    done();
    return Status::Ok();
  }
  TriggeredStream* s = halo_stream_[rank];
  if (s == nullptr) return Status::Fail(SimError::InvalidState);
  const std::uint64_t g = iter;
  const std::uint64_t e = g + 1;
  const std::uint32_t slot = static_cast<std::uint32_t>(g % 2);
  DeviceActor* ap = &actor;
  with_ready(actor, *s, e, [this, ap, s, rank, e, g, slot, done = std::move(done)]() {
    Result<std::uint64_t> mode = memory_.read_u64(layout_.mode_addr(rank, s->stream_id, slot));
    const bool host_issued = mode.ok() && mode.value() == kModeHostIssued;
    if (host_issued) {
      const std::uint32_t P = layout_.ranks;
      const RankId left = (rank + P - 1) % P;
      const RankId right = (rank + 1) % P;
      monitor_of_rank_[rank]->host_issue(*s, g, [this, rank, left]() {
        Writeback wb;
        wb.device_flag = layout_.sig_addr(left, 1);
        fabric_.rdma_write(rank, left, layout_.halo_send_addr(rank),
                           layout_.halo_recv_addr(left, 1), layout_.halo_bytes, std::move(wb));
      });
      monitor_of_rank_[rank]->host_issue(*s, g, [this, rank, right]() {
        Writeback wb;
        wb.device_flag = layout_.sig_addr(right, 0);
        fabric_.rdma_write(rank, right, layout_.halo_send_addr(rank),
                           layout_.halo_recv_addr(right, 0), layout_.halo_bytes,
                           std::move(wb));
      });
    } else {
      Status hs = s->check_trigger(e);
      if (!hs.ok()) {
        ap->fault(hs.err);
        return;
      }
      Status st = nic_of_rank_[rank]->doorbell_write(s->counters[slot], 2, rank);
      if (!st.ok()) {
        ap->fault(st.err);
        return;
      }
      ctx_.coord.record(engine_.now(), rank, CoordEvent::Kind::DeviceTrigger, s->stream_id, 2,
                        e);
    }
    done();
  });
  return Status::Ok();
}

}  // namespace trigsim
