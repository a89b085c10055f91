// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trigsim/device.hpp"
#include "trigsim/host_runtime.hpp"
#include "trigsim/nic_cxi.hpp"
#include "trigsim/nic_ib.hpp"
#include "trigsim/types.hpp"
#include "trigsim/workloads.hpp"

namespace trigsim {

/// A problem found while parsing, overriding, or validating a scenario.
/// line 0 marks file-level problems (missing sections, cross-rank rules).
struct ScenarioIssue {
  int line = 0;
  std::string message;
};

enum class WorkloadKind : std::uint8_t { Custom, Phase, Exhaustion, Jacobi, AmFuzz };
enum class BackendKind : std::uint8_t { Ofi, Ib };
enum class RunMode : std::uint8_t { Gpu, Host, Compare };

struct SimConfig {
  SimTime time_limit = 0;  // 0 = run to completion
  std::uint64_t seed = 1;
};

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::Custom;
  BackendKind backend = BackendKind::Ofi;
  RunMode mode = RunMode::Gpu;
  std::uint32_t ranks = 2;
  std::vector<std::uint64_t> p_list;       // sweep over rank counts
  std::uint32_t phases = 200;
  std::vector<std::uint64_t> phases_list;  // sweep over phase counts
  std::uint32_t iters = 50;
  SimTime per_iter_compute = 50000;
  std::uint64_t halo_bytes = 4096;
  std::uint32_t am_ring = 64;
  std::uint32_t am_batch = 8;
  AmFuzzParams fuzz;
};

/// One raw line of a free-form section, kept verbatim for lowering so
/// diagnostics can point at the source line.
struct RawLine {
  int line = 0;
  std::vector<std::string> tokens;
};

struct ExpectLine {
  int line = 0;
  std::string key;
  std::string op;       // == != <= >= < > ~=
  std::string value;
  std::string param;    // empty, or the sweep value this applies to (@P)
};

struct QpDecl {
  int line = 0;
  RankId src = 0;
  RankId dst = 0;
};

struct Scenario {
  SimConfig sim;
  NicParams nic;
  std::uint32_t ranks_per_nic = 1;
  MonitorConfig monitor;
  IbParams ib;
  CostModel costs;
  WorkloadSpec workload;
  std::map<std::uint32_t, std::vector<RawLine>> programs;  // [program rank N]
  std::vector<RawLine> program_all;                        // [program all]
  std::map<std::string, std::vector<RawLine>> handlers;    // [handler NAME]
  std::map<std::uint32_t, std::vector<RawLine>> prestage;  // [prestage rank N]
  std::vector<ExpectLine> expects;
  std::vector<QpDecl> qps;
};

/// One pre-staged entry on a rank's NIC, armed before the run starts and
/// released by raw device doorbells.
struct PrestagedEntry {
  int line = 0;
  std::uint32_t counter_ref = 0;
  std::uint64_t threshold = 0;
  bool is_put = false;
  RankId peer = 0;
  std::uint64_t src_off = 0;  // put source offset
  std::uint64_t dst_off = 0;  // put destination offset
  std::uint64_t size = 0;
  bool has_sig = false;       // put arrival flag on the peer
  std::uint32_t sig_index = 0;
  std::uint64_t value = 0;    // signal payload
};

struct LoweredRank {
  Program program;
  std::vector<std::string> counter_names;  // declaration order = counter_ref
  std::vector<PrestagedEntry> entries;
};

/// Scenario contents resolved against the step grammar: handler names
/// assigned ids (sorted order), counter references resolved, per-step
/// backend rules enforced.
struct LoweredScenario {
  std::vector<LoweredRank> ranks;
  std::vector<std::string> handler_names;            // sorted; index = id
  std::map<std::uint32_t, Program> handler_programs;
};

/// Parse the INI-like text. Issues are appended; returns false when the
/// text is unusable (the scenario may be partially filled).
bool parse_scenario(const std::string& text, Scenario& out, std::vector<ScenarioIssue>& issues);

/// Apply one `section.key=value` override on top of a parsed scenario.
bool apply_override(Scenario& s, const std::string& dotted_key, const std::string& value,
                    std::string& error);

/// Resolve programs and prestage tables for `ranks` ranks and enforce the
/// cross-cutting rules (step/backend compatibility, handler step limits,
/// equal barrier counts, threshold bounds, rank bounds, queue-pair
/// exclusivity). Returns false when any issue was appended.
bool lower_scenario(const Scenario& s, std::uint32_t ranks, LoweredScenario& out,
                    std::vector<ScenarioIssue>& issues);

/// Parse + lower with the scenario's own rank count; validation entry point.
bool validate_scenario(const Scenario& s, std::vector<ScenarioIssue>& issues);

const char* to_string(WorkloadKind kind);
const char* to_string(BackendKind backend);
const char* to_string(RunMode mode);

}  // namespace trigsim
