// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/coordination.hpp"

#include <memory>

#include "trigsim/nic_cxi.hpp"

namespace trigsim {

Layout Layout::compute(std::uint32_t ranks, std::uint32_t am_ring, std::uint64_t halo_bytes) {
  Layout l;
  l.ranks = ranks;
  l.am_ring = am_ring;
  l.halo_bytes = halo_bytes;
  const std::uint64_t mailbox_bytes =
      static_cast<std::uint64_t>(ranks) * am_ring * l.am_slot_bytes;
  l.halo_base = l.mailbox_base + ((mailbox_bytes + 0xfff) & ~0xfffull);
  const std::uint64_t halo_area = halo_bytes * 3;  // 1 send + 2 receive buffers
  l.device_bytes = l.halo_base + ((halo_area + 0xfff) & ~0xfffull);
  return l;
}

// --- AM wire format -------------------------------------------------------

std::vector<std::uint8_t> am_pack_body(std::uint32_t handler, RankId source,
                                       std::span<const std::uint8_t> args) {
  const std::uint64_t header = static_cast<std::uint64_t>(handler) |
                               (static_cast<std::uint64_t>(source & 0xffff) << 32) |
                               (static_cast<std::uint64_t>(args.size() & 0xffff) << 48);
  std::vector<std::uint8_t> body(8 + args.size());
  for (int i = 0; i < 8; ++i) body[i] = static_cast<std::uint8_t>(header >> (8 * i));
  std::copy(args.begin(), args.end(), body.begin() + 8);
  return body;
}

AmHeader am_unpack_header(std::uint64_t word) {
  AmHeader h;
  h.handler = static_cast<std::uint32_t>(word & 0xffffffffull);
  h.source = static_cast<std::uint16_t>((word >> 32) & 0xffff);
  h.args_len = static_cast<std::uint16_t>((word >> 48) & 0xffff);
  return h;
}

// --- AM log ---------------------------------------------------------------

namespace {
std::uint64_t am_key(RankId sender, RankId receiver, std::uint64_t seq) {
  return (static_cast<std::uint64_t>(sender) << 48) |
         (static_cast<std::uint64_t>(receiver) << 32) | (seq & 0xffffffffull);
}
}  // namespace

std::size_t AmLog::record_send(AmSendRecord rec) {
  std::size_t idx = sends_.size();
  by_key_[am_key(rec.sender, rec.receiver, rec.seq)] = idx;
  sends_.push_back(std::move(rec));
  return idx;
}

void AmLog::record_dispatch(AmDispatchRecord rec) {
  auto it = by_key_.find(am_key(rec.sender, rec.receiver, rec.seq));
  if (it != by_key_.end()) sends_[it->second].dispatched = true;
  dispatches_.push_back(std::move(rec));
}

std::size_t AmLog::send_index(RankId sender, RankId receiver, std::uint64_t seq) const {
  return by_key_.at(am_key(sender, receiver, seq));
}

// --- AM state -------------------------------------------------------------

AmState::AmState(const Layout& layout, std::uint32_t ranks)
    : layout_(&layout),
      ranks_(ranks),
      next_seq_(static_cast<std::size_t>(ranks) * ranks, 1),
      issued_(static_cast<std::size_t>(ranks) * ranks, 0),
      expected_(static_cast<std::size_t>(ranks) * ranks, 1),
      consumed_(static_cast<std::size_t>(ranks) * ranks, 0) {}

Result<AmState::Placement> AmState::plan_send(RankId sender, RankId receiver,
                                              std::uint32_t handler,
                                              std::span<const std::uint8_t> args) {
  if (layout_ == nullptr || layout_->am_ring == 0) return SimError::InvalidState;
  if (args.size() > layout_->am_args_max) return SimError::OutOfBounds;
  Placement p;
  p.seq = next_seq_[idx(sender, receiver)]++;
  p.slot = (p.seq - 1) % layout_->am_ring;
  MemAddr slot_addr = layout_->am_slot_addr(receiver, sender, p.slot);
  p.seq_dst = slot_addr;
  p.body_dst = MemAddr{slot_addr.rank, slot_addr.space, slot_addr.offset + 8};
  p.body = am_pack_body(handler, sender, args);
  return p;
}

bool AmState::ring_full(RankId sender, RankId receiver) const {
  return issued_[idx(sender, receiver)] - consumed_[idx(sender, receiver)] >= layout_->am_ring;
}

void AmState::note_issued(RankId sender, RankId receiver) { ++issued_[idx(sender, receiver)]; }

std::optional<AmState::Ready> AmState::next_ready(const MemoryPool& memory,
                                                  RankId receiver) const {
  for (RankId s = 0; s < ranks_; ++s) {
    const std::uint64_t e = expected_[idx(s, receiver)];
    MemAddr addr = expected_slot_addr(receiver, s);
    Result<std::uint64_t> seq = memory.read_u64(addr);
    if (seq.ok() && seq.value() == e) return Ready{s, e, addr};
  }
  return std::nullopt;
}

MemAddr AmState::expected_slot_addr(RankId receiver, RankId sender) const {
  const std::uint64_t e = expected_[idx(sender, receiver)];
  return layout_->am_slot_addr(receiver, sender, (e - 1) % layout_->am_ring);
}

void AmState::consume(RankId receiver, RankId sender) {
  ++expected_[idx(sender, receiver)];
  ++consumed_[idx(sender, receiver)];
}

// --- shared context -------------------------------------------------------

void CoordContext::init(Engine& eng, MemoryPool& mem, std::uint32_t ranks) {
  engine = &eng;
  memory = &mem;
  outstanding.assign(ranks, 0);
  quiet_waiters.assign(ranks, {});
  fallback_count.assign(ranks, 0);
}

void CoordContext::op_completed(RankId rank) {
  if (outstanding[rank] > 0) --outstanding[rank];
  if (outstanding[rank] == 0 && !quiet_waiters[rank].empty()) {
    std::vector<std::function<void()>> fired;
    fired.swap(quiet_waiters[rank]);
    for (auto& fn : fired)
      engine->schedule(engine->now(), EventKind::ActorResume, std::move(fn), rank);
  }
}

void CoordContext::wait_quiet(RankId rank, std::function<void()> wake) {
  if (outstanding[rank] == 0) {
    wake();
    return;
  }
  quiet_waiters[rank].push_back(std::move(wake));
}

// --- dissemination round walker -------------------------------------------

namespace {
struct RoundWalk : std::enable_shared_from_this<RoundWalk> {
  Engine& engine;
  MemoryPool& memory;
  CoordContext& ctx;
  const Layout& layout;
  std::uint32_t P, R, slot;
  RankId rank;
  std::uint64_t epoch;
  std::function<void(std::uint32_t, RankId, std::function<void()>)> send;
  std::function<void()> done;

  RoundWalk(Engine& e, MemoryPool& m, CoordContext& c, const Layout& l, std::uint32_t p,
            RankId r, std::uint64_t ep, std::uint32_t sl)
      : engine(e), memory(m), ctx(c), layout(l), P(p), R(barrier_rounds(p)), slot(sl), rank(r),
        epoch(ep) {}

  void round(std::uint32_t r) {
    if (r == R) {
      auto d = done;
      d();
      return;
    }
    auto self = shared_from_this();
    auto [to, from] = DisseminationSchedule::targets(P, rank, r);
    (void)from;
    send(r, to, [self, r]() { self->await(r); });
  }

  void await(std::uint32_t r) {
    auto self = shared_from_this();
    const MemAddr sig = layout.barrier_sig_addr(rank, slot, r);
    auto proceed = [self, r, sig]() {
      Result<std::uint64_t> v = self->memory.read_u64(sig);
      self->ctx.coord.record(self->engine.now(), self->rank, CoordEvent::Kind::SignalObserved,
                             sig.offset, v.ok() ? v.value() : 0, self->epoch);
      self->round(r + 1);
    };
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

void run_barrier_rounds(
    Engine& engine, MemoryPool& memory, CoordContext& ctx, const Layout& layout, std::uint32_t P,
    RankId rank, std::uint64_t epoch, std::uint32_t slot,
    std::function<void(std::uint32_t round, RankId peer, std::function<void()> issued)> send,
    std::function<void()> done) {
  if (barrier_rounds(P) == 0) {
    done();
    return;
  }
  auto walk = std::make_shared<RoundWalk>(engine, memory, ctx, layout, P, rank, epoch, slot);
  walk->send = std::move(send);
  walk->done = std::move(done);
  walk->round(0);
}

}  // namespace trigsim
