// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "trigsim/coordination.hpp"
#include "trigsim/device.hpp"
#include "trigsim/error.hpp"
#include "trigsim/nic_cxi.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

/// Shared cost constants for the modeled host-driven coordination path and
/// the benchmark compute budget.
struct CostModel {
  SimTime host_sync = 25200;           // host-driven coordination per step
  SimTime gpu_doorbell = 110;          // doorbell latency in benchmark runs
  SimTime wire = 0;                    // benchmark fabric latency
  SimTime compute_total = 10600000;    // total device compute per rank (phase runs)
};

/// Split `total` into `parts` chunks differing by at most one unit, the
/// remainder spread over the leading chunks.
std::vector<SimTime> split_even(SimTime total, std::uint64_t parts);

/// Phase benchmark: `phases` rounds of compute followed by one barrier
/// (device-triggered path) or one modeled host-driven sync.
Program build_phase_gpu_program(std::uint32_t phases, SimTime compute_total);
Program build_phase_host_program(std::uint32_t phases, SimTime compute_total,
                                 SimTime host_sync);

/// 1-D ring halo iteration: compute, exchange halos with both neighbors,
/// wait for both arrival flags, barrier. With one rank both modes reduce to
/// pure compute. `gpu_initiated` selects explicit puts over the fused
/// triggered exchange.
Program build_jacobi_gpu_program(const Layout& layout, RankId rank, std::uint32_t iters,
                                 SimTime per_iter_compute, bool gpu_initiated);
Program build_jacobi_host_program(std::uint32_t ranks, std::uint32_t iters,
                                  SimTime per_iter_compute, SimTime host_sync);

/// Deterministic halo payload byte: distinct per rank, varying per offset.
std::uint8_t halo_pattern(RankId rank, std::uint64_t offset);

struct AmFuzzParams {
  std::uint32_t ranks = 4;
  std::uint64_t seed = 1;
  std::uint32_t rounds = 3;       // send bursts per rank
  std::uint32_t burst_max = 4;    // sends per burst, 1..burst_max
  std::uint32_t handlers = 3;     // handler ids 0..handlers-1
  std::uint32_t args_max = 16;    // argument bytes per message
  SimTime gap_max = 5000;         // compute jitter between bursts
  std::uint32_t pair_cap = 32;    // sends per ordered pair; keep below the
                                  //   mailbox ring so credits never run out
};

struct AmFuzzPlan {
  std::vector<Program> programs;        // one per rank
  std::vector<std::uint64_t> inbound;   // messages each rank will receive
  std::uint64_t total_sends = 0;
};

/// Seeded random AM exchange. Programs depend only on the parameters, so
/// the same plan drives either backend. Each rank interleaves send bursts
/// with credit-returning one-pass polls, then parks on a poll for its exact
/// inbound total, quiesces, and joins a final barrier.
AmFuzzPlan build_am_fuzz(const AmFuzzParams& p);

struct ExhaustionResult {
  std::uint32_t ranks = 0;
  std::uint32_t rounds = 0;             // dissemination rounds per barrier
  std::uint64_t predicted = 0;          // min(capacity/R, counter_max/(2R))
  std::uint64_t armed_barriers = 0;     // fully armed before the first refusal
  std::uint64_t entries_armed = 0;
  SimError first_error = SimError::None;
};

/// Arm back-to-back barrier generations on one NIC and one counter with a
/// continuous threshold ladder until the NIC refuses, and report where and
/// why it stopped. Self-contained: builds its own simulation state and
/// never runs the clock.
ExhaustionResult exhaustion_study(std::uint32_t ranks, const NicParams& params);

}  // namespace trigsim
