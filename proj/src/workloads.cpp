// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/workloads.hpp"

#include "trigsim/engine.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/rng.hpp"

namespace trigsim {

std::vector<SimTime> split_even(SimTime total, std::uint64_t parts) {
  std::vector<SimTime> out(parts, 0);
  if (parts == 0) return out;
  const SimTime base = total / parts;
  const std::uint64_t rem = total % parts;
  for (std::uint64_t i = 0; i < parts; ++i) out[i] = base + (i < rem ? 1 : 0);
  return out;
}

Program build_phase_gpu_program(std::uint32_t phases, SimTime compute_total) {
  const std::vector<SimTime> chunks = split_even(compute_total, phases);
  Program prog;
  prog.reserve(2ull * phases);
  for (std::uint32_t i = 0; i < phases; ++i) {
    prog.push_back(StepCompute{chunks[i]});
    prog.push_back(StepBarrierAll{});
  }
  return prog;
}

Program build_phase_host_program(std::uint32_t phases, SimTime compute_total,
                                 SimTime host_sync) {
  const std::vector<SimTime> chunks = split_even(compute_total, phases);
  Program prog;
  prog.reserve(2ull * phases);
  for (std::uint32_t i = 0; i < phases; ++i) {
    prog.push_back(StepCompute{chunks[i]});
    prog.push_back(StepHostSync{host_sync});
  }
  return prog;
}

Program build_jacobi_gpu_program(const Layout& layout, RankId rank, std::uint32_t iters,
                                 SimTime per_iter_compute, bool gpu_initiated) {
  Program prog;
  const std::uint32_t P = layout.ranks;
  for (std::uint32_t i = 0; i < iters; ++i) {
    prog.push_back(StepCompute{per_iter_compute});
    if (P < 2) continue;  // weak-scaling baseline: no neighbors, no sync
    if (gpu_initiated) {
      const RankId left = (rank + P - 1) % P;
      const RankId right = (rank + 1) % P;
      StepIbPut to_left;
      to_left.peer = left;
      to_left.src_off = layout.halo_send_addr(rank).offset;
      to_left.dst_off = layout.halo_recv_addr(left, 1).offset;
      to_left.size = layout.halo_bytes;
      to_left.has_sig = true;
      to_left.sig_index = 1;
      prog.push_back(to_left);
      StepIbPut to_right;
      to_right.peer = right;
      to_right.src_off = layout.halo_send_addr(rank).offset;
      to_right.dst_off = layout.halo_recv_addr(right, 0).offset;
      to_right.size = layout.halo_bytes;
      to_right.has_sig = true;
      to_right.sig_index = 0;
      prog.push_back(to_right);
    } else {
      prog.push_back(StepHaloExchange{});
    }
    prog.push_back(StepWaitUntil{0, CmpOp::GE, i + 1ull});
    prog.push_back(StepWaitUntil{1, CmpOp::GE, i + 1ull});
    prog.push_back(StepBarrierAll{});
  }
  return prog;
}

Program build_jacobi_host_program(std::uint32_t ranks, std::uint32_t iters,
                                  SimTime per_iter_compute, SimTime host_sync) {
  Program prog;
  for (std::uint32_t i = 0; i < iters; ++i) {
    prog.push_back(StepCompute{per_iter_compute});
    if (ranks >= 2) prog.push_back(StepHostSync{host_sync});
  }
  return prog;
}

std::uint8_t halo_pattern(RankId rank, std::uint64_t offset) {
  return static_cast<std::uint8_t>((rank + 1) * 37 + offset * 11 + 5);
}

AmFuzzPlan build_am_fuzz(const AmFuzzParams& p) {
  AmFuzzPlan plan;
  plan.programs.assign(p.ranks, {});
  plan.inbound.assign(p.ranks, 0);
  Rng rng(p.seed);
  std::vector<std::vector<std::uint32_t>> pair_sent(
      p.ranks, std::vector<std::uint32_t>(p.ranks, 0));
  for (std::uint32_t round = 0; round < p.rounds && p.ranks >= 2; ++round) {
    for (RankId rank = 0; rank < p.ranks; ++rank) {
      Program& prog = plan.programs[rank];
      const std::uint64_t burst = rng.range(1, p.burst_max);
      for (std::uint64_t b = 0; b < burst; ++b) {
        const RankId peer =
            static_cast<RankId>((rank + 1 + rng.below(p.ranks - 1)) % p.ranks);
        if (pair_sent[rank][peer] >= p.pair_cap) continue;  // stay within credits
        ++pair_sent[rank][peer];
        StepAmSend send;
        send.peer = peer;
        send.handler = static_cast<std::uint32_t>(rng.below(p.handlers));
        send.args.resize(rng.below(p.args_max + 1ull));
        for (auto& byte : send.args) byte = static_cast<std::uint8_t>(rng.below(256));
        prog.push_back(std::move(send));
        ++plan.inbound[peer];
        ++plan.total_sends;
      }
      const SimTime gap = rng.below(p.gap_max + 1);
      if (gap > 0) prog.push_back(StepCompute{gap});
      prog.push_back(StepAmPoll{0});  // return any credits already arrived
    }
  }
  for (RankId rank = 0; rank < p.ranks; ++rank) {
    Program& prog = plan.programs[rank];
    prog.push_back(StepAmPoll{plan.inbound[rank]});
    prog.push_back(StepQuiet{});
    if (p.ranks >= 2) prog.push_back(StepBarrierAll{});
  }
  return plan;
}

ExhaustionResult exhaustion_study(std::uint32_t ranks, const NicParams& params) {
  ExhaustionResult out;
  out.ranks = ranks;
  out.rounds = barrier_rounds(ranks);
  Result<std::uint64_t> predicted =
      max_prestaged_barriers(ranks, params.dwq_capacity, params.counter_max);
  if (!predicted.ok()) {
    out.first_error = predicted.error();
    return out;
  }
  out.predicted = predicted.value();
  Engine engine;
  MemoryPool memory;
  Fabric fabric(engine, memory, 0);
  CxiNic nic(0, engine, memory, fabric, params);
  const Layout layout = Layout::compute(ranks, 0, 0);
  const CounterId ctr = nic.alloc_counter();
  HostCapability cap;
  const std::uint32_t R = out.rounds;
  // Continuous threshold ladder: barrier k occupies thresholds
  // (k-1)*R+1 .. k*R on the one counter, exactly the pre-staging pattern.
  for (std::uint64_t k = 1;; ++k) {
    for (std::uint32_t r = 0; r < R; ++r) {
      auto [to, from] = DisseminationSchedule::targets(ranks, 0, r);
      (void)from;
      SignalOp op{to, layout.barrier_sig_addr(to, 0, r), k};
      Result<EntryId> res =
          nic.queue_work(cap, 0, ctr, (k - 1) * R + r + 1, op, WritebackSpec{});
      if (!res.ok()) {
        out.first_error = res.error();
        out.armed_barriers = k - 1;
        return out;
      }
      ++out.entries_armed;
    }
  }
}

}  // namespace trigsim
