// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "trigsim/coordination.hpp"
#include "trigsim/device.hpp"
#include "trigsim/engine.hpp"
#include "trigsim/error.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

using QpId = std::uint32_t;

struct IbParams {
  SimTime wqe_build_latency = 300;  // device-side descriptor construction
  SimTime doorbell_latency = 100;   // doorbell to NIC fetch of the WQE
  std::uint32_t send_ring = 256;    // WQEs in flight per queue pair
  std::uint32_t cq_ring = 256;      // completion queue slots per queue pair
};

/// One completion queue slot. Validity travels in the owner bit: the producer
/// stamps its wrap parity (produced / ring) & 1, and the consumer accepts a
/// slot only when the bit matches its own wrap parity — so entries left over
/// from the previous lap read as empty without any head pointer exchange.
/// Slots start at 1, which matches no consumer parity on lap zero.
struct CompletionEntry {
  std::uint64_t wqe = 0;  // post ordinal within the queue pair, from 1
  std::uint32_t owner_bit = 1;
  SimTime time = 0;
};

/// Reliable connected queue pair: writes flow src -> dst in post order and
/// complete in post order.
struct QueuePair {
  QpId id = 0;
  RankId src = kNoRank;  // owning rank; the only legal poster
  RankId dst = kNoRank;
  std::uint64_t posted = 0;
  std::uint64_t delivered = 0;
  std::vector<CompletionEntry> cq;
  std::uint64_t cq_produced = 0;
  std::uint64_t cq_consumed = 0;
  std::uint64_t cq_overruns = 0;  // signaled completions dropped on a full ring
};

/// GPU-initiated transport. The issuing context builds each work queue entry
/// itself (wqe_build_latency), rings the queue pair doorbell, and the NIC
/// puts the write on the wire — no pre-staging and no host in the path. A
/// write posted at T lands at T + wqe_build + doorbell + wire.
class IbTransport {
 public:
  IbTransport(Engine& engine, Fabric& fabric, IbParams params)
      : engine_(engine), fabric_(fabric), params_(params) {}

  const IbParams& params() const { return params_; }

  /// One queue pair per direction; a second claim on (src, dst) is rejected.
  Result<QpId> create_qp(RankId src, RankId dst);
  Result<QpId> find_qp(RankId src, RankId dst) const;

  const QueuePair& qp(QpId id) const { return qps_.at(id); }
  std::size_t qp_count() const { return qps_.size(); }

  /// Post an RDMA write reading the source region at NIC execution time.
  /// Only the owning rank may post; posted - delivered is bounded by the
  /// send ring. Returns the WQE ordinal (1-based).
  Result<std::uint64_t> post_write(QpId id, RankId caller, const MemAddr& src_addr,
                                   const MemAddr& dst_addr, std::uint64_t size,
                                   Writeback writeback, bool signaled);
  /// Same, but the payload is captured in the descriptor at post time.
  Result<std::uint64_t> post_write_imm(QpId id, RankId caller,
                                       std::span<const std::uint8_t> payload,
                                       const MemAddr& dst_addr, Writeback writeback,
                                       bool signaled);

  /// Drain every currently valid completion, oldest first.
  Result<std::vector<CompletionEntry>> cq_poll(QpId id);

 private:
  Result<std::uint64_t> post(QpId id, RankId caller, std::function<void(Writeback)> issue,
                             Writeback writeback, bool signaled);
  void on_delivered(QpId id, std::uint64_t wqe, bool signaled);

  Engine& engine_;
  Fabric& fabric_;
  IbParams params_;
  std::vector<QueuePair> qps_;
  std::map<std::pair<RankId, RankId>, QpId> by_pair_;
};

/// GPU-initiated backend: every communication step posts its own WQEs on the
/// rank's queue pairs, paying wqe_build_latency per post instead of a
/// readiness handshake. Queue pairs are created on first use; the scenario
/// may pre-declare them. Pre-staged doorbell counters and the fused halo
/// step do not exist on this substrate.
class IbBackend : public Backend {
 public:
  IbBackend(Engine& engine, MemoryPool& memory, CoordContext& ctx, const Layout& layout,
            IbTransport& transport)
      : engine_(engine), memory_(memory), ctx_(ctx), layout_(layout), transport_(transport) {}

  IbTransport& transport() { return transport_; }

  bool gpu_initiated() const override { return true; }
  Status raw_trigger(DeviceActor& actor, std::uint32_t counter_ref,
                     std::uint64_t value) override;
  void barrier(DeviceActor& actor, std::uint64_t index, std::function<void()> done) override;
  Status am_send(DeviceActor& actor, const StepAmSend& step,
                 std::function<void()> done) override;
  Status ib_put(DeviceActor& actor, const StepIbPut& step, std::function<void()> done) override;
  Status halo_exchange(DeviceActor& actor, std::uint64_t iter,
                       std::function<void()> done) override;

 private:
  Result<QpId> qp_to(RankId src, RankId dst);
  /// Outstanding-op accounting (quiet support) folded around the post.
  Result<std::uint64_t> post_put(RankId src, RankId dst, const MemAddr& src_addr,
                                 const MemAddr& dst_addr, std::uint64_t size, Writeback wb);
  Result<std::uint64_t> post_imm(RankId src, RankId dst, std::span<const std::uint8_t> payload,
                                 const MemAddr& dst_addr, Writeback wb);
  Writeback wrap_complete(RankId src, Writeback wb);

  Engine& engine_;
  MemoryPool& memory_;
  CoordContext& ctx_;
  const Layout& layout_;
  IbTransport& transport_;
};

}  // namespace trigsim
