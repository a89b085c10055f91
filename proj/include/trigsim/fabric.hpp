// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "trigsim/engine.hpp"
#include "trigsim/error.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

/// Completion side effects of a fabric write, applied strictly after the
/// data delivery: an optional device-visible flag increment plus a callback
/// for NIC/CQ bookkeeping.
struct Writeback {
  std::optional<MemAddr> device_flag;  // incremented by 1 on completion
  std::function<void()> on_complete;   // CQ record / accounting hook
};

/// Reliable in-order transport between rank endpoints. Deliveries on one
/// (src, dst) connection complete in issue order; different connections may
/// reorder freely (exercised by per-link latency overrides).
class Fabric {
 public:
  Fabric(Engine& engine, MemoryPool& memory, SimTime default_wire_latency)
      : engine_(engine), memory_(memory), default_latency_(default_wire_latency) {}

  void set_link_latency(RankId src, RankId dst, SimTime latency);
  SimTime link_latency(RankId src, RankId dst) const;

  /// One RDMA write: source bytes are snapshotted at issue (the NIC DMA
  /// reads at execution time) and land in dst at issue + wire latency, but
  /// never before an earlier delivery on the same connection.
  Result<EventId> rdma_write(RankId src, RankId dst, const MemAddr& src_addr,
                             const MemAddr& dst_addr, std::uint64_t size,
                             Writeback writeback = {});

  /// Write an immediate payload (host-composed bytes, e.g. an epoch value)
  /// with the same ordering rules.
  Result<EventId> rdma_write_imm(RankId src, RankId dst, std::span<const std::uint8_t> payload,
                                 const MemAddr& dst_addr, Writeback writeback = {});

  std::uint64_t writes_issued() const { return writes_issued_; }

 private:
  struct Link {
    SimTime latency;
    SimTime last_delivery = 0;  // FIFO floor for the next delivery
  };

  Link& link(RankId src, RankId dst);
  Result<EventId> deliver(RankId src, RankId dst, std::vector<std::uint8_t> bytes,
                          const MemAddr& dst_addr, Writeback writeback);

  Engine& engine_;
  MemoryPool& memory_;
  SimTime default_latency_;
  std::map<std::pair<RankId, RankId>, Link> links_;
  std::uint64_t writes_issued_ = 0;
};

}  // namespace trigsim
