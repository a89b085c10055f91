// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/nic_ib.hpp"

namespace trigsim {

// --- transport ------------------------------------------------------------

Result<QpId> IbTransport::create_qp(RankId src, RankId dst) {
  const auto key = std::make_pair(src, dst);
  if (by_pair_.count(key) != 0) return SimError::InvalidState;  // direction already owned
  const QpId id = static_cast<QpId>(qps_.size());
  QueuePair q;
  q.id = id;
  q.src = src;
  q.dst = dst;
  q.cq.assign(params_.cq_ring, CompletionEntry{});
  qps_.push_back(std::move(q));
  by_pair_[key] = id;
  return id;
}

Result<QpId> IbTransport::find_qp(RankId src, RankId dst) const {
  auto it = by_pair_.find(std::make_pair(src, dst));
  if (it == by_pair_.end()) return SimError::OutOfBounds;
  return it->second;
}

Result<std::uint64_t> IbTransport::post(QpId id, RankId caller,
                                        std::function<void(Writeback)> issue, Writeback writeback,
                                        bool signaled) {
  if (id >= qps_.size()) return SimError::OutOfBounds;
  QueuePair& q = qps_[id];
  if (caller != q.src) return SimError::NotOwner;
  if (q.posted - q.delivered >= params_.send_ring) return SimError::SendQueueFull;
  const std::uint64_t wqe = ++q.posted;
  Writeback wrapped;
  wrapped.device_flag = writeback.device_flag;
  wrapped.on_complete = [this, id, wqe, signaled, user = std::move(writeback.on_complete)]() {
    on_delivered(id, wqe, signaled);
    if (user) user();
  };
  // Descriptor build plus doorbell, then the NIC fetches and executes.
  engine_.schedule_in(params_.wqe_build_latency + params_.doorbell_latency,
                      EventKind::NicExecute,
                      [issue = std::move(issue), wrapped = std::move(wrapped)]() mutable {
                        issue(std::move(wrapped));
                      },
                      q.src);
  return wqe;
}

Result<std::uint64_t> IbTransport::post_write(QpId id, RankId caller, const MemAddr& src_addr,
                                              const MemAddr& dst_addr, std::uint64_t size,
                                              Writeback writeback, bool signaled) {
  return post(id, caller,
              [this, id, src_addr, dst_addr, size](Writeback wb) {
                const QueuePair& q = qps_[id];
                (void)fabric_.rdma_write(q.src, q.dst, src_addr, dst_addr, size, std::move(wb));
              },
              std::move(writeback), signaled);
}

Result<std::uint64_t> IbTransport::post_write_imm(QpId id, RankId caller,
                                                  std::span<const std::uint8_t> payload,
                                                  const MemAddr& dst_addr, Writeback writeback,
                                                  bool signaled) {
  std::vector<std::uint8_t> data(payload.begin(), payload.end());
  return post(id, caller,
              [this, id, data = std::move(data), dst_addr](Writeback wb) {
                const QueuePair& q = qps_[id];
                (void)fabric_.rdma_write_imm(q.src, q.dst, data, dst_addr, std::move(wb));
              },
              std::move(writeback), signaled);
}

void IbTransport::on_delivered(QpId id, std::uint64_t wqe, bool signaled) {
  QueuePair& q = qps_[id];
  ++q.delivered;
  if (!signaled) return;
  const std::uint32_t S = params_.cq_ring;
  if (q.cq_produced - q.cq_consumed >= S) {
    ++q.cq_overruns;
    return;
  }
  CompletionEntry& slot = q.cq[q.cq_produced % S];
  slot.wqe = wqe;
  slot.owner_bit = static_cast<std::uint32_t>((q.cq_produced / S) & 1);
  slot.time = engine_.now();
  ++q.cq_produced;
}

Result<std::vector<CompletionEntry>> IbTransport::cq_poll(QpId id) {
  if (id >= qps_.size()) return SimError::OutOfBounds;
  QueuePair& q = qps_[id];
  const std::uint32_t S = params_.cq_ring;
  std::vector<CompletionEntry> out;
  for (;;) {
    const CompletionEntry& slot = q.cq[q.cq_consumed % S];
    if (slot.owner_bit != ((q.cq_consumed / S) & 1)) break;
    out.push_back(slot);
    ++q.cq_consumed;
  }
  return out;
}

// --- backend --------------------------------------------------------------

Result<QpId> IbBackend::qp_to(RankId src, RankId dst) {
  Result<QpId> found = transport_.find_qp(src, dst);
  if (found.ok()) return found;
  return transport_.create_qp(src, dst);
}

Writeback IbBackend::wrap_complete(RankId src, Writeback wb) {
  wb.on_complete = [this, src, user = std::move(wb.on_complete)]() {
    ctx_.op_completed(src);
    if (user) user();
  };
  return wb;
}

Result<std::uint64_t> IbBackend::post_put(RankId src, RankId dst, const MemAddr& src_addr,
                                          const MemAddr& dst_addr, std::uint64_t size,
                                          Writeback wb) {
  Result<QpId> q = qp_to(src, dst);
  if (!q.ok()) return q.error();
  Result<std::uint64_t> r = transport_.post_write(q.value(), src, src_addr, dst_addr, size,
                                                  wrap_complete(src, std::move(wb)),
                                                  /*signaled=*/false);
  if (r.ok()) ctx_.op_issued(src);
  return r;
}

Result<std::uint64_t> IbBackend::post_imm(RankId src, RankId dst,
                                          std::span<const std::uint8_t> payload,
                                          const MemAddr& dst_addr, Writeback wb) {
  Result<QpId> q = qp_to(src, dst);
  if (!q.ok()) return q.error();
  Result<std::uint64_t> r = transport_.post_write_imm(q.value(), src, payload, dst_addr,
                                                      wrap_complete(src, std::move(wb)),
                                                      /*signaled=*/false);
  if (r.ok()) ctx_.op_issued(src);
  return r;
}

Status IbBackend::raw_trigger(DeviceActor& actor, std::uint32_t counter_ref,
                              std::uint64_t value) {
  (void)actor;
  (void)counter_ref;
  (void)value;
  return Status::Fail(SimError::InvalidState);  // pre-staged counters are triggered-only
}

Status IbBackend::halo_exchange(DeviceActor& actor, std::uint64_t iter,
                                std::function<void()> done) {
  (void)actor;
  (void)iter;
  (void)done;
  return Status::Fail(SimError::InvalidState);  // this substrate uses explicit puts
}

void IbBackend::barrier(DeviceActor& actor, std::uint64_t index, std::function<void()> done) {
  const RankId rank = actor.rank();
  if (layout_.ranks < 2) {
    done();
    return;
  }
  const std::uint64_t epoch = index + 1;
  const std::uint32_t slot = static_cast<std::uint32_t>(index % 2);
  DeviceActor* ap = &actor;
  auto send = [this, ap, rank, epoch, slot](std::uint32_t r, RankId peer,
                                            std::function<void()> issued) {
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(epoch >> (8 * i));
    Result<std::uint64_t> pr =
        post_imm(rank, peer, buf, layout_.barrier_sig_addr(peer, slot, r), Writeback{});
    if (!pr.ok()) {
      ap->fault(pr.error());
      return;
    }
    engine_.schedule_in(transport_.params().wqe_build_latency, EventKind::ActorResume,
                        std::move(issued), rank);
  };
  run_barrier_rounds(engine_, memory_, ctx_, layout_, layout_.ranks, rank, epoch, slot,
                     std::move(send), std::move(done));
}

Status IbBackend::am_send(DeviceActor& actor, const StepAmSend& step,
                          std::function<void()> done) {
  const RankId rank = actor.rank();
  if (ctx_.am.ring_full(rank, step.peer)) return Status::Fail(SimError::MailboxFull);
  Result<AmState::Placement> plan = ctx_.am.plan_send(rank, step.peer, step.handler, step.args);
  if (!plan.ok()) return Status::Fail(plan.error());
  const AmState::Placement& pl = plan.value();
  ctx_.am.note_issued(rank, step.peer);
  AmSendRecord rec;
  rec.sender = rank;
  rec.receiver = step.peer;
  rec.handler = step.handler;
  rec.seq = pl.seq;
  rec.args = step.args;
  rec.issued_at = engine_.now();
  const std::size_t li = ctx_.am_log.record_send(std::move(rec));
  ctx_.coord.record(engine_.now(), rank, CoordEvent::Kind::AmSent, step.peer, step.handler,
                    pl.seq);
  Writeback body_wb;
  body_wb.on_complete = [this, li]() { ctx_.am_log.mark_body_delivered(li, engine_.now()); };
  Result<std::uint64_t> br = post_imm(rank, step.peer, pl.body, pl.body_dst, std::move(body_wb));
  if (!br.ok()) return Status::Fail(br.error());
  const SimTime build = transport_.params().wqe_build_latency;
  const RankId peer = step.peer;
  const std::uint64_t seq = pl.seq;
  const MemAddr seq_dst = pl.seq_dst;
  DeviceActor* ap = &actor;
  // The sequence-word descriptor builds after the body's; it reaches the
  // wire second on the same connection, so the body is visible first.
  engine_.schedule_in(build, EventKind::ActorResume,
                      [this, ap, rank, peer, seq, seq_dst, li]() {
                        std::uint8_t buf[8];
                        for (int i = 0; i < 8; ++i)
                          buf[i] = static_cast<std::uint8_t>(seq >> (8 * i));
                        Writeback wb;
                        wb.on_complete = [this, li]() {
                          ctx_.am_log.mark_seq_delivered(li, engine_.now());
                        };
                        Result<std::uint64_t> sr = post_imm(rank, peer, buf, seq_dst,
                                                            std::move(wb));
                        if (!sr.ok()) ap->fault(sr.error());
                      },
                      rank);
  engine_.schedule_in(2 * build, EventKind::ActorResume, std::move(done), rank);
  return Status::Ok();
}

Status IbBackend::ib_put(DeviceActor& actor, const StepIbPut& step, std::function<void()> done) {
  const RankId rank = actor.rank();
  const MemAddr src{rank, Space::Device, step.src_off};
  const MemAddr dst{step.peer, Space::Device, step.dst_off};
  Writeback wb;
  if (step.has_sig) wb.device_flag = layout_.sig_addr(step.peer, step.sig_index);
  Result<std::uint64_t> r = post_put(rank, step.peer, src, dst, step.size, std::move(wb));
  if (!r.ok()) return Status::Fail(r.error());
  engine_.schedule_in(transport_.params().wqe_build_latency, EventKind::ActorResume,
                      std::move(done), rank);
  return Status::Ok();
}

}  // namespace trigsim
