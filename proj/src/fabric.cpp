// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/fabric.hpp"

#include <memory>

namespace trigsim {

void Fabric::set_link_latency(RankId src, RankId dst, SimTime latency) {
  link(src, dst).latency = latency;
}

SimTime Fabric::link_latency(RankId src, RankId dst) const {
  auto it = links_.find({src, dst});
  return it == links_.end() ? default_latency_ : it->second.latency;
}

Fabric::Link& Fabric::link(RankId src, RankId dst) {
  auto [it, inserted] = links_.try_emplace({src, dst}, Link{default_latency_, 0});
  return it->second;
}

Result<EventId> Fabric::rdma_write(RankId src, RankId dst, const MemAddr& src_addr,
                                   const MemAddr& dst_addr, std::uint64_t size,
                                   Writeback writeback) {
  std::vector<std::uint8_t> bytes(size);
  if (size > 0) {
    Status st = memory_.read(src_addr, bytes);
    if (!st.ok()) return Result<EventId>(st.err);
  }
  return deliver(src, dst, std::move(bytes), dst_addr, std::move(writeback));
}

Result<EventId> Fabric::rdma_write_imm(RankId src, RankId dst,
                                       std::span<const std::uint8_t> payload,
                                       const MemAddr& dst_addr, Writeback writeback) {
  return deliver(src, dst, std::vector<std::uint8_t>(payload.begin(), payload.end()),
                 dst_addr, std::move(writeback));
}

Result<EventId> Fabric::deliver(RankId src, RankId dst, std::vector<std::uint8_t> bytes,
                                const MemAddr& dst_addr, Writeback writeback) {
  // Validate the landing zone up front so a bad target faults at issue,
  // not at delivery time.
  if (bytes.size() > 0) {
    Status st = memory_.check_range(dst_addr, bytes.size());
    if (!st.ok()) return Result<EventId>(st.err);
  }

  Link& ln = link(src, dst);
  SimTime arrival = engine_.now() + ln.latency;
  if (arrival < ln.last_delivery) arrival = ln.last_delivery;  // FIFO per link
  ln.last_delivery = arrival;
  ++writes_issued_;

  auto wb = std::make_shared<Writeback>(std::move(writeback));
  auto data = std::make_shared<std::vector<std::uint8_t>>(std::move(bytes));
  MemoryPool* mem = &memory_;
  Engine* eng = &engine_;
  std::uint64_t size = data->size();

  return engine_.schedule(
      arrival, EventKind::WireDelivery,
      [mem, eng, data, dst_addr, wb, dst]() {
        if (!data->empty()) {
          (void)mem->write(dst_addr, *data);
        }
        if (wb->device_flag || wb->on_complete) {
          // Completion is observable strictly after the data: same tick,
          // later sequence number.
          MemAddr flag{};
          bool has_flag = wb->device_flag.has_value();
          if (has_flag) flag = *wb->device_flag;
          eng->schedule(
              eng->now(), EventKind::CompletionWriteback,
              [mem, has_flag, flag, wb]() {
                if (has_flag) (void)mem->fetch_add_u64(flag, 1);
                if (wb->on_complete) wb->on_complete();
              },
              dst);
        }
      },
      dst, src, dst_addr.offset, size);
}

}  // namespace trigsim
