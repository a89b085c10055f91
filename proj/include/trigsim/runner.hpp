// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trigsim/scenario.hpp"
#include "trigsim/trace.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

enum class RunOutcome : std::uint8_t { Completed, Deadlock, LimitReached, Fault };
const char* to_string(RunOutcome outcome);

/// One coordination event stripped of timing: the backend-independent
/// protocol outcome. Two backends agree on a scenario when every rank's
/// projected sequence matches.
struct ProjectionEvent {
  CoordEvent::Kind kind = CoordEvent::Kind::BarrierEnter;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  bool operator==(const ProjectionEvent&) const = default;
};
using Projection = std::vector<std::vector<ProjectionEvent>>;  // per rank

Projection project_coord(const std::vector<CoordEvent>& events, std::uint32_t ranks);

struct RankMetrics {
  RankId rank = 0;
  SimTime end_to_end = 0;  // device program finish time
  std::uint64_t barriers_done = 0;
  std::uint64_t coord_samples = 0;
  std::uint64_t coord_total_ns = 0;
  SimTime coord_max_ns = 0;
  std::uint64_t am_dispatched = 0;
  std::uint64_t fallback_gens = 0;
  std::uint32_t armed_high_water = 0;
};

struct NicMetrics {
  NicId id = 0;
  std::uint64_t queued = 0;
  std::uint64_t released = 0;
  std::uint64_t retired = 0;
  std::uint32_t dwq_high_water = 0;
  std::uint64_t incr_high_water = 0;
};

/// Everything extracted from one concrete simulation before teardown.
struct RunResult {
  RunOutcome outcome = RunOutcome::Completed;
  SimTime end_time = 0;
  SimTime makespan = 0;  // latest device finish
  SimError fault_error = SimError::None;
  RankId fault_rank = kNoRank;
  std::vector<RankMetrics> ranks;
  std::vector<NicMetrics> nics;
  std::uint64_t monitor_ticks = 0;
  std::uint64_t serviced_total = 0;
  std::uint64_t gens_armed = 0;
  std::uint64_t fallback_gens = 0;  // generations taken over, all ranks
  std::uint64_t fallback_writes = 0;
  std::uint64_t fabric_writes = 0;
  std::uint64_t am_sends = 0;
  std::uint64_t am_dispatches = 0;
  std::uint64_t coord_samples = 0;  // sums over ranks
  std::uint64_t coord_total_ns = 0;
  SimTime coord_max_ns = 0;
  std::vector<CoordEvent> coord;  // full coordination trace
  std::vector<AmSendRecord> am_send_log;          // ground truth for AM oracles
  std::vector<AmDispatchRecord> am_dispatch_log;
  Projection projection;
  std::vector<TraceEvent> trace;  // engine trace when requested
  std::vector<ScenarioIssue> build_issues;
};

/// One concrete run to perform: workload kind and backend from the
/// scenario, plus the sweep point and the gpu/host arm of a comparison.
struct Instance {
  WorkloadKind kind = WorkloadKind::Custom;
  BackendKind backend = BackendKind::Ofi;
  bool host_mode = false;  // modeled host-driven coordination variant
  std::uint32_t ranks = 2;
  std::uint32_t phases = 0;  // phase workload sweep point
};

/// Build the full simulation for one instance, run it to completion (or the
/// scenario time limit), and extract metrics. Deterministic: equal scenario
/// and instance produce an identical RunResult.
RunResult run_instance(const Scenario& s, const Instance& inst, bool want_trace = false);

struct ScenarioRow {
  std::uint64_t param = 0;  // sweep value (rank count or phase count), 0 = none
  std::string status;       // completed | deadlock | limit | fault
  std::string fault;        // error name when status == fault
  std::map<std::string, double> values;
};

struct ExpectResult {
  int line = 0;
  std::string text;  // the expectation as written
  bool ok = false;
  std::string actual;
};

struct ScenarioOutcome {
  std::vector<ScenarioRow> rows;
  std::map<std::string, double> extras;  // sweep-level aggregates
  std::string status = "completed";      // worst row status
  std::vector<ExpectResult> expects;
  bool expects_ok = true;
  bool built_ok = true;
  std::vector<ScenarioIssue> issues;
  std::vector<CoordEvent> coord;   // from the last instance run
  std::vector<TraceEvent> trace;   // last instance, when requested
};

struct RunOptions {
  bool want_trace = false;
};

/// Resolve sweeps and comparison modes, run every instance, derive the
/// workload's summary metrics, and evaluate the [expect] section.
ScenarioOutcome run_scenario(const Scenario& s, const RunOptions& opt = {});

/// Deterministic serializations of an outcome.
std::string outcome_csv(const ScenarioOutcome& o);
std::string outcome_json(const Scenario& s, const ScenarioOutcome& o);

bool load_scenario_file(const std::string& path, Scenario& out,
                        std::vector<ScenarioIssue>& issues);

}  // namespace trigsim
