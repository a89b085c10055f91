// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "trigsim/engine.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/trace.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

// Stream-slot (and handoff) mode words.
inline constexpr std::uint64_t kModeTriggered = 0;
inline constexpr std::uint64_t kModeHostIssued = 1;

// Well-known stream ids. One readiness/requested/mode block per stream.
inline constexpr std::uint32_t kBarrierStream = 0;
inline constexpr std::uint32_t kAmStream = 1;
inline constexpr std::uint32_t kHaloStream = 2;

/// Per-rank device/host memory map. Every protocol word lives at a fixed,
/// scenario-independent offset except the mailbox and halo areas, which are
/// sized from the scenario (am_ring = 0 drops the mailboxes entirely so
/// large-P runs stay small).
struct Layout {
  std::uint32_t ranks = 0;
  std::uint64_t sig_base = 0x0;  // user signal words sig0..sig255
  std::uint32_t sig_words = 256;
  std::uint64_t barrier_sig_base = 0x800;  // [slot][round], epoch-valued
  std::uint32_t barrier_rounds_max = 16;   // supports P up to 2^16
  std::uint64_t ctrl_base = 0x1000;        // per stream: readiness, requested, mode[2]
  std::uint32_t streams_max = 8;
  std::uint64_t mailbox_base = 0x2000;
  std::uint32_t am_ring = 64;  // slots per sender pair; 0 = no mailboxes
  std::uint32_t am_slot_bytes = 128;
  std::uint32_t am_args_max = 112;
  std::uint64_t halo_base = 0x2000;
  std::uint64_t halo_bytes = 0;  // per buffer (1 send + 2 receive buffers)
  std::uint64_t device_bytes = 0;
  std::uint64_t host_bytes = 4096;

  static Layout compute(std::uint32_t ranks, std::uint32_t am_ring, std::uint64_t halo_bytes);

  MemAddr sig_addr(RankId rank, std::uint32_t idx) const {
    return MemAddr{rank, Space::Device, sig_base + 8ull * idx};
  }
  MemAddr barrier_sig_addr(RankId rank, std::uint32_t slot, std::uint32_t round) const {
    return MemAddr{rank, Space::Device,
                   barrier_sig_base + 8ull * (slot * barrier_rounds_max + round)};
  }
  MemAddr readiness_addr(RankId rank, std::uint32_t stream) const {
    return MemAddr{rank, Space::Device, ctrl_base + 32ull * stream};
  }
  MemAddr requested_addr(RankId rank, std::uint32_t stream) const {
    return MemAddr{rank, Space::Device, ctrl_base + 32ull * stream + 8};
  }
  MemAddr mode_addr(RankId rank, std::uint32_t stream, std::uint32_t slot) const {
    return MemAddr{rank, Space::Device, ctrl_base + 32ull * stream + 16 + 8ull * slot};
  }
  MemAddr am_slot_addr(RankId receiver, RankId sender, std::uint64_t slot) const {
    return MemAddr{receiver, Space::Device,
                   mailbox_base + (static_cast<std::uint64_t>(sender) * am_ring + slot) *
                                      am_slot_bytes};
  }
  MemAddr halo_send_addr(RankId rank) const {
    return MemAddr{rank, Space::Device, halo_base};
  }
  /// side 0 = buffer receiving from the left neighbor, 1 = from the right.
  MemAddr halo_recv_addr(RankId rank, int side) const {
    return MemAddr{rank, Space::Device, halo_base + halo_bytes * (1 + side)};
  }
};

/// Classic dissemination pattern: round r sends to (rank + 2^r) mod P and
/// waits on a signal from (rank - 2^r) mod P; R = ceil(log2 P) rounds.
struct DisseminationSchedule {
  static std::pair<RankId, RankId> targets(std::uint32_t P, RankId rank, std::uint32_t r) {
    const std::uint64_t step = 1ull << r;
    RankId send_to = static_cast<RankId>((rank + step) % P);
    RankId wait_from = static_cast<RankId>((rank + P - (step % P)) % P);
    return {send_to, wait_from};
  }
};

// --- active message wire format -------------------------------------------
// Slot: sequence u64 @0, header u64 @8 (handler u32, source u16, args_len
// u16), args @16. The sequence word is the sole release indicator.

std::vector<std::uint8_t> am_pack_body(std::uint32_t handler, RankId source,
                                       std::span<const std::uint8_t> args);
struct AmHeader {
  std::uint32_t handler = 0;
  std::uint16_t source = 0;
  std::uint16_t args_len = 0;
};
AmHeader am_unpack_header(std::uint64_t word);

struct AmSendRecord {
  RankId sender = kNoRank;
  RankId receiver = kNoRank;
  std::uint32_t handler = 0;
  std::uint64_t seq = 0;
  std::vector<std::uint8_t> args;
  SimTime issued_at = 0;
  SimTime body_delivered = 0;
  SimTime seq_delivered = 0;
  bool dispatched = false;
};
struct AmDispatchRecord {
  RankId receiver = kNoRank;
  RankId sender = kNoRank;
  std::uint32_t handler = 0;
  std::uint64_t seq = 0;
  std::vector<std::uint8_t> args;
  SimTime time = 0;
};

/// Ground-truth log used by the protocol oracles: what each sender wrote,
/// when each half arrived, and what each receiver dispatched.
class AmLog {
 public:
  std::size_t record_send(AmSendRecord rec);
  /// Pre-planned sends (triggered backend) are recorded at build with
  /// issued_at = 0; the device stamps the real issue time here.
  void set_issued(std::size_t idx, SimTime t) { sends_[idx].issued_at = t; }
  void mark_body_delivered(std::size_t idx, SimTime t) { sends_[idx].body_delivered = t; }
  void mark_seq_delivered(std::size_t idx, SimTime t) { sends_[idx].seq_delivered = t; }
  void record_dispatch(AmDispatchRecord rec);
  std::size_t send_index(RankId sender, RankId receiver, std::uint64_t seq) const;

  const std::vector<AmSendRecord>& sends() const { return sends_; }
  const std::vector<AmDispatchRecord>& dispatches() const { return dispatches_; }

 private:
  std::vector<AmSendRecord> sends_;
  std::vector<AmDispatchRecord> dispatches_;
  std::map<std::uint64_t, std::size_t> by_key_;  // (sender, receiver, seq) -> index
};

/// Per-pair sequencing and the sender-side credit model. Sequence numbers
/// start at 1 and advance in plan order; the receiver consumes in sequence
/// order, which returns the slot to the sender (flow control is modeled at
/// the endpoints, not as wire messages).
class AmState {
 public:
  AmState() = default;
  AmState(const Layout& layout, std::uint32_t ranks);

  struct Placement {
    std::uint64_t seq = 0;
    std::uint64_t slot = 0;
    MemAddr body_dst;
    MemAddr seq_dst;
    std::vector<std::uint8_t> body;
  };

  /// Assign the next sequence number for (sender -> receiver) and compose
  /// the slot writes. No credit check: planning may run ahead of issue.
  Result<Placement> plan_send(RankId sender, RankId receiver, std::uint32_t handler,
                              std::span<const std::uint8_t> args);

  /// True when one more issue would wrap onto an un-consumed slot.
  bool ring_full(RankId sender, RankId receiver) const;
  void note_issued(RankId sender, RankId receiver);

  struct Ready {
    RankId sender = kNoRank;
    std::uint64_t seq = 0;
    MemAddr slot_addr;
  };
  /// Scan senders 0..P-1 for a slot whose sequence equals the expected next.
  std::optional<Ready> next_ready(const MemoryPool& memory, RankId receiver) const;
  void consume(RankId receiver, RankId sender);

  std::uint64_t expected(RankId receiver, RankId sender) const {
    return expected_[idx(sender, receiver)];
  }
  std::uint64_t planned(RankId sender, RankId receiver) const {
    return next_seq_[idx(sender, receiver)] - 1;
  }
  MemAddr expected_slot_addr(RankId receiver, RankId sender) const;
  const Layout& layout() const { return *layout_; }

 private:
  std::size_t idx(RankId sender, RankId receiver) const {
    return static_cast<std::size_t>(sender) * ranks_ + receiver;
  }

  const Layout* layout_ = nullptr;
  std::uint32_t ranks_ = 0;
  std::vector<std::uint64_t> next_seq_;  // per (sender, receiver), next to plan
  std::vector<std::uint64_t> issued_;    // per (sender, receiver), device-issued
  std::vector<std::uint64_t> expected_;  // per (sender, receiver), receiver side
  std::vector<std::uint64_t> consumed_;  // per (sender, receiver), credits back
};

/// Shared per-run protocol state: the coordination trace, the AM log, and
/// per-rank outstanding-operation counts backing quiet().
struct CoordContext {
  Engine* engine = nullptr;
  MemoryPool* memory = nullptr;
  CoordTrace coord;
  AmLog am_log;
  AmState am;
  std::vector<std::uint64_t> outstanding;  // per rank, issued minus completed
  std::vector<std::vector<std::function<void()>>> quiet_waiters;
  std::vector<std::uint64_t> fallback_count;   // per rank, generations taken over
  std::uint64_t fallback_writes = 0;

  void init(Engine& eng, MemoryPool& mem, std::uint32_t ranks);
  void op_issued(RankId rank) { ++outstanding[rank]; }
  void op_completed(RankId rank);
  /// wake fires via a scheduled event once outstanding hits zero; fires
  /// immediately (inline) when already zero.
  void wait_quiet(RankId rank, std::function<void()> wake);
};

/// Walk the dissemination rounds for one rank strictly sequentially:
/// issue round r's send, then park on this rank's round-r signal word
/// (barrier_sig[slot][r] >= epoch), then round r+1. `send` must invoke its
/// continuation when the send has been issued (it may take simulated time);
/// it is a no-op sender for host-issued generations. Records SignalObserved
/// per round; calls `done` after the final round's signal.
void run_barrier_rounds(
    Engine& engine, MemoryPool& memory, CoordContext& ctx, const Layout& layout, std::uint32_t P,
    RankId rank, std::uint64_t epoch, std::uint32_t slot,
    std::function<void(std::uint32_t round, RankId peer, std::function<void()> issued)> send,
    std::function<void()> done);

}  // namespace trigsim
