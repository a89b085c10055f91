// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"
#include "trigsim/coordination.hpp"
#include "trigsim/device.hpp"
#include "trigsim/engine.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/host_runtime.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/nic_cxi.hpp"
#include "trigsim/nic_ib.hpp"
#include "trigsim/workloads.hpp"

namespace trigsim {

const char* to_string(RunOutcome outcome) {
  switch (outcome) {
    case RunOutcome::Completed: return "completed";
    case RunOutcome::Deadlock: return "deadlock";
    case RunOutcome::LimitReached: return "limit";
    case RunOutcome::Fault: return "fault";
  }
  return "?";
}

Projection project_coord(const std::vector<CoordEvent>& events, std::uint32_t ranks) {
  Projection proj(ranks);
  for (const CoordEvent& e : events) {
    switch (e.kind) {
      case CoordEvent::Kind::BarrierEnter:
      case CoordEvent::Kind::BarrierExit:
      case CoordEvent::Kind::SignalObserved:
      case CoordEvent::Kind::AmSent:
      case CoordEvent::Kind::AmDispatched:
        break;
      default:
        continue;  // timing/substrate events: not part of the protocol outcome
    }
    if (e.rank >= ranks) continue;
    proj[e.rank].push_back(ProjectionEvent{e.kind, e.a, e.b, e.c});
  }
  return proj;
}

namespace {

/// Owns every piece of one simulation; declaration order gives safe teardown
/// (actors and backends die before the engine and memory they reference).
struct Sim {
  Engine engine;
  MemoryPool memory;
  Layout layout;
  CoordContext ctx;
  std::unique_ptr<Fabric> fabric;
  std::vector<std::unique_ptr<CxiNic>> nics;
  std::vector<std::unique_ptr<HostMonitor>> monitors;  // one per NIC
  std::unique_ptr<IbTransport> transport;
  std::unique_ptr<OfiBackend> ofi;
  std::unique_ptr<IbBackend> ib;
  std::map<std::uint32_t, Program> handler_programs;
  std::vector<Program> programs;
  std::vector<std::unique_ptr<DeviceActor>> actors;
  bool monitor_active = false;
  bool use_handlers = false;
  SimError fault_error = SimError::None;
  RankId fault_rank = kNoRank;
};

template <typename StepT>
std::uint64_t count_steps(const Program& prog) {
  std::uint64_t n = 0;
  for (const DeviceStep& st : prog)
    if (std::holds_alternative<StepT>(st)) ++n;
  return n;
}

bool program_uses_am(const Program& prog) {
  for (const DeviceStep& st : prog)
    if (std::holds_alternative<StepAmSend>(st) || std::holds_alternative<StepAmPoll>(st))
      return true;
  return false;
}

bool build_sim(const Scenario& s, const Instance& inst, bool want_trace, Sim& sim,
               std::vector<ScenarioIssue>& issues) {
  const std::uint32_t P = inst.ranks;
  LoweredScenario lowered;
  bool uses_am = false;
  std::uint64_t halo_used = 0;
  switch (inst.kind) {
    case WorkloadKind::Custom: {
      if (!lower_scenario(s, P, lowered, issues)) return false;
      for (const LoweredRank& lr : lowered.ranks)
        uses_am = uses_am || program_uses_am(lr.program);
      uses_am = uses_am || !lowered.handler_names.empty();
      halo_used = s.workload.halo_bytes;
      break;
    }
    case WorkloadKind::Jacobi:
      halo_used = s.workload.halo_bytes;
      break;
    case WorkloadKind::AmFuzz:
      uses_am = true;
      break;
    default:
      break;
  }

  sim.engine.trace().enable(want_trace);
  sim.layout = Layout::compute(P, uses_am ? s.workload.am_ring : 0, halo_used);
  for (std::uint32_t r = 0; r < P; ++r)
    sim.memory.add_rank(sim.layout.device_bytes, sim.layout.host_bytes);
  sim.fabric = std::make_unique<Fabric>(sim.engine, sim.memory, s.costs.wire);
  sim.ctx.init(sim.engine, sim.memory, P);
  sim.ctx.am = AmState(sim.layout, P);

  sim.programs.resize(P);
  switch (inst.kind) {
    case WorkloadKind::Custom:
      for (std::uint32_t r = 0; r < P; ++r) sim.programs[r] = std::move(lowered.ranks[r].program);
      sim.handler_programs = std::move(lowered.handler_programs);
      sim.use_handlers = true;
      break;
    case WorkloadKind::Phase:
      for (std::uint32_t r = 0; r < P; ++r)
        sim.programs[r] =
            inst.host_mode
                ? build_phase_host_program(inst.phases, s.costs.compute_total, s.costs.host_sync)
                : build_phase_gpu_program(inst.phases, s.costs.compute_total);
      break;
    case WorkloadKind::Jacobi:
      for (std::uint32_t r = 0; r < P; ++r)
        sim.programs[r] =
            inst.host_mode
                ? build_jacobi_host_program(P, s.workload.iters, s.workload.per_iter_compute,
                                            s.costs.host_sync)
                : build_jacobi_gpu_program(sim.layout, r, s.workload.iters,
                                           s.workload.per_iter_compute,
                                           inst.backend == BackendKind::Ib);
      break;
    case WorkloadKind::AmFuzz: {
      AmFuzzParams fp = s.workload.fuzz;
      fp.ranks = P;
      fp.seed = s.sim.seed;
      AmFuzzPlan plan = build_am_fuzz(fp);
      sim.programs = std::move(plan.programs);
      break;
    }
    case WorkloadKind::Exhaustion:
      issues.push_back({0, "exhaustion runs have no simulation instance"});
      return false;
  }

  const std::uint32_t rpn = s.ranks_per_nic > 0 ? s.ranks_per_nic : 1;
  if (inst.backend == BackendKind::Ofi) {
    sim.ofi = std::make_unique<OfiBackend>(sim.engine, sim.memory, *sim.fabric, sim.ctx,
                                           sim.layout);
    if (!inst.host_mode) {
      // One NIC per node of `rpn` ranks, and one progress monitor per NIC:
      // host servicing capacity scales with the job, as it would across nodes.
      const std::uint32_t n_nics = (P + rpn - 1) / rpn;
      for (std::uint32_t i = 0; i < n_nics; ++i) {
        sim.nics.push_back(
            std::make_unique<CxiNic>(i, sim.engine, sim.memory, *sim.fabric, s.nic));
        sim.monitors.push_back(std::make_unique<HostMonitor>(
            sim.engine, sim.memory, *sim.fabric, sim.ctx, sim.layout, s.monitor));
        sim.monitors.back()->add_nic(sim.nics.back().get());
      }
      for (std::uint32_t r = 0; r < P; ++r) {
        sim.ofi->set_nic(r, sim.nics[r / rpn].get());
        sim.ofi->set_monitor(r, sim.monitors[r / rpn].get());
      }
    }
  } else {
    sim.transport = std::make_unique<IbTransport>(sim.engine, *sim.fabric, s.ib);
    sim.ib = std::make_unique<IbBackend>(sim.engine, sim.memory, sim.ctx, sim.layout,
                                         *sim.transport);
    for (const QpDecl& q : s.qps) {
      Result<QpId> qr = sim.transport->create_qp(q.src, q.dst);
      if (!qr.ok()) {
        issues.push_back({q.line, "queue pair creation failed"});
        return false;
      }
    }
  }
  Backend& backend = sim.ofi ? static_cast<Backend&>(*sim.ofi) : *sim.ib;

  if (halo_used > 0) {
    std::vector<std::uint8_t> buf(halo_used);
    for (std::uint32_t r = 0; r < P; ++r) {
      for (std::uint64_t off = 0; off < halo_used; ++off) buf[off] = halo_pattern(r, off);
      sim.memory.write(sim.layout.halo_send_addr(r), buf);
    }
  }

  for (std::uint32_t r = 0; r < P; ++r) {
    sim.actors.push_back(std::make_unique<DeviceActor>(r, sim.engine, sim.memory, sim.ctx,
                                                       backend, sim.layout));
    DeviceActor& a = *sim.actors.back();
    a.set_program(&sim.programs[r]);
    if (sim.use_handlers) a.set_handlers(&sim.handler_programs);
    a.set_fault_sink([&sim](RankId rank, SimError err) {
      if (sim.fault_rank == kNoRank) {
        sim.fault_rank = rank;
        sim.fault_error = err;
      }
      sim.engine.request_stop();
    });
  }

  // Triggered-backend pre-staging: streams for the collective steps, a
  // static send plan per AM-sending rank, and the scenario's raw entries.
  if (sim.ofi && !inst.host_mode) {
    bool any = false;
    const std::uint32_t batch = s.workload.am_batch > 0 ? s.workload.am_batch : 1;
    for (std::uint32_t r = 0; r < P; ++r) {
      CxiNic* nic = sim.nics[r / rpn].get();
      const Program& prog = sim.programs[r];
      const std::uint64_t barriers = count_steps<StepBarrierAll>(prog);
      const std::uint64_t halos = count_steps<StepHaloExchange>(prog);
      const std::uint64_t sends = count_steps<StepAmSend>(prog);

      if (P >= 2 && barriers > 0) {
        TriggeredStream st;
        st.kind = TriggeredStream::Kind::Barrier;
        st.stream_id = kBarrierStream;
        st.rank = r;
        st.nic = nic;
        st.total = barriers;
        st.actions = barriers;
        st.counters[0] = nic->alloc_counter();
        st.counters[1] = nic->alloc_counter();
        st.plan = [lay = &sim.layout, r](std::uint64_t gen) {
          return plan_barrier_gen(*lay, r, gen);
        };
        sim.ofi->set_barrier_stream(r, &sim.monitors[r / rpn]->add_stream(std::move(st)));
        any = true;
      }
      if (P >= 2 && halos > 0) {
        TriggeredStream st;
        st.kind = TriggeredStream::Kind::Halo;
        st.stream_id = kHaloStream;
        st.rank = r;
        st.nic = nic;
        st.total = halos;
        st.actions = halos;
        st.counters[0] = nic->alloc_counter();
        st.counters[1] = nic->alloc_counter();
        st.plan = [lay = &sim.layout, r](std::uint64_t) { return plan_halo_gen(*lay, r); };
        sim.ofi->set_halo_stream(r, &sim.monitors[r / rpn]->add_stream(std::move(st)));
        any = true;
      }
      if (sends > 0) {
        std::vector<PlannedSend> plan;
        for (const DeviceStep& step : prog) {
          const StepAmSend* sa = std::get_if<StepAmSend>(&step);
          if (sa == nullptr) continue;
          Result<AmState::Placement> pl =
              sim.ctx.am.plan_send(r, sa->peer, sa->handler, sa->args);
          if (!pl.ok()) {
            issues.push_back({0, "active-message planning failed on rank " + std::to_string(r)});
            return false;
          }
          AmSendRecord rec;
          rec.sender = r;
          rec.receiver = sa->peer;
          rec.handler = sa->handler;
          rec.seq = pl.value().seq;
          rec.args = sa->args;
          const std::size_t li = sim.ctx.am_log.record_send(std::move(rec));
          plan.push_back(PlannedSend{sa->peer, sa->handler, pl.value().seq, pl.value().body_dst,
                                     pl.value().seq_dst, pl.value().body, li});
        }
        sim.ofi->set_am_plan(r, std::move(plan));
        TriggeredStream st;
        st.kind = TriggeredStream::Kind::AmBatch;
        st.stream_id = kAmStream;
        st.rank = r;
        st.nic = nic;
        st.total = (sends + batch - 1) / batch;
        st.batch = batch;
        st.actions = sends;
        st.counters[0] = nic->alloc_counter();
        st.counters[1] = nic->alloc_counter();
        OfiBackend* ofi = sim.ofi.get();
        CoordContext* ctx = &sim.ctx;
        st.plan = [ofi, ctx, r, batch](std::uint64_t gen) {
          const std::vector<PlannedSend>& sends_of = ofi->am_plan(r);
          std::vector<PlannedEntry> out;
          const std::uint64_t lo = gen * batch;
          const std::uint64_t hi =
              std::min<std::uint64_t>(lo + batch, sends_of.size());
          for (std::uint64_t k = lo; k < hi; ++k) {
            PlannedEntry e;
            e.threshold = k - lo + 1;
            const std::size_t li = sends_of[k].log_index;
            e.op = AmWriteOp{sends_of[k].receiver, sends_of[k].body_dst, sends_of[k].body,
                             sends_of[k].seq_dst, sends_of[k].seq, [ctx, li]() {
                               ctx->am_log.mark_body_delivered(li, ctx->engine->now());
                             }};
            e.am_index = li;
            out.push_back(std::move(e));
          }
          return out;
        };
        sim.ofi->set_am_stream(r, &sim.monitors[r / rpn]->add_stream(std::move(st)));
        any = true;
      }
      if (inst.kind == WorkloadKind::Custom && !lowered.ranks[r].entries.empty()) {
        std::vector<CounterId> raw;
        raw.reserve(lowered.ranks[r].counter_names.size());
        for (std::size_t i = 0; i < lowered.ranks[r].counter_names.size(); ++i)
          raw.push_back(nic->alloc_counter());
        for (const PrestagedEntry& pe : lowered.ranks[r].entries) {
          NicOp op;
          WritebackSpec wb;
          if (pe.is_put) {
            op = PutOp{pe.peer, MemAddr{r, Space::Device, pe.src_off},
                       MemAddr{pe.peer, Space::Device, pe.dst_off}, pe.size};
            if (pe.has_sig) wb.device_flag = sim.layout.sig_addr(pe.peer, pe.sig_index);
          } else {
            op = SignalOp{pe.peer, sim.layout.sig_addr(pe.peer, pe.sig_index), pe.value};
          }
          Result<EntryId> qr = nic->queue_work(sim.monitors[r / rpn]->capability(), r,
                                               raw[pe.counter_ref], pe.threshold, op, wb);
          if (!qr.ok()) {
            // Pre-run arming refusal: surface as a fault at time zero.
            sim.fault_rank = r;
            sim.fault_error = qr.error();
            sim.ofi->set_raw_counters(r, std::move(raw));
            return true;
          }
        }
        sim.ofi->set_raw_counters(r, std::move(raw));
        any = true;
      }
    }
    sim.monitor_active = any;
  }
  return true;
}

void extract(const Scenario& s, const Instance& inst, Sim& sim, bool want_trace,
             RunResult& res) {
  const std::uint32_t P = inst.ranks;
  const std::uint32_t rpn = s.ranks_per_nic > 0 ? s.ranks_per_nic : 1;
  res.end_time = sim.engine.now();
  for (std::uint32_t r = 0; r < P; ++r) {
    const DeviceActor& a = *sim.actors[r];
    RankMetrics m;
    m.rank = r;
    m.end_to_end = a.finished_at();
    m.barriers_done = a.barriers_done();
    m.coord_samples = a.coord_samples();
    m.coord_total_ns = a.coord_total_ns();
    m.coord_max_ns = a.coord_max_ns();
    m.am_dispatched = a.am_dispatched();
    m.fallback_gens = sim.ctx.fallback_count[r];
    if (!sim.nics.empty()) m.armed_high_water = sim.nics[r / rpn]->armed_high_water(r);
    res.makespan = std::max(res.makespan, m.end_to_end);
    res.coord_samples += m.coord_samples;
    res.coord_total_ns += m.coord_total_ns;
    res.coord_max_ns = std::max(res.coord_max_ns, m.coord_max_ns);
    res.fallback_gens += m.fallback_gens;
    res.am_dispatches += m.am_dispatched;
    res.ranks.push_back(m);
  }
  for (const auto& nic : sim.nics) {
    NicMetrics n;
    n.id = nic->id();
    n.queued = nic->queued_total();
    n.released = nic->released_total();
    n.retired = nic->retired_total();
    n.dwq_high_water = nic->dwq_high_water();
    n.incr_high_water = nic->incr_high_water();
    res.nics.push_back(n);
  }
  for (const auto& m : sim.monitors) {
    res.monitor_ticks += m->ticks();
    res.serviced_total += m->serviced_total();
    res.gens_armed += m->gens_armed();
  }
  res.fallback_writes = sim.ctx.fallback_writes;
  res.fabric_writes = sim.fabric->writes_issued();
  res.am_sends = sim.ctx.am_log.sends().size();
  res.am_send_log = sim.ctx.am_log.sends();
  res.am_dispatch_log = sim.ctx.am_log.dispatches();
  res.coord = sim.ctx.coord.events();
  res.projection = project_coord(res.coord, P);
  if (want_trace) res.trace = sim.engine.trace().events();
}

}  // namespace

RunResult run_instance(const Scenario& s, const Instance& inst, bool want_trace) {
  RunResult res;
  Sim sim;
  if (!build_sim(s, inst, want_trace, sim, res.build_issues)) {
    res.outcome = RunOutcome::Fault;
    res.fault_error = SimError::InvalidState;
    return res;
  }
  if (sim.fault_rank != kNoRank) {  // pre-staging refused before the run
    res.outcome = RunOutcome::Fault;
    res.fault_error = sim.fault_error;
    res.fault_rank = sim.fault_rank;
    extract(s, inst, sim, want_trace, res);
    return res;
  }
  for (auto& a : sim.actors) a->start();
  if (sim.monitor_active)
    for (auto& m : sim.monitors) m->start();
  const SimTime limit =
      s.sim.time_limit > 0 ? s.sim.time_limit : std::numeric_limits<SimTime>::max() / 2;
  const Engine::RunStatus rs = sim.engine.run_until(limit);
  if (sim.fault_rank != kNoRank) {
    res.outcome = RunOutcome::Fault;
    res.fault_error = sim.fault_error;
    res.fault_rank = sim.fault_rank;
  } else {
    switch (rs) {
      case Engine::RunStatus::Idle: res.outcome = RunOutcome::Completed; break;
      case Engine::RunStatus::Deadlock: res.outcome = RunOutcome::Deadlock; break;
      case Engine::RunStatus::LimitReached: res.outcome = RunOutcome::LimitReached; break;
      case Engine::RunStatus::Stopped: res.outcome = RunOutcome::Fault; break;
    }
  }
  extract(s, inst, sim, want_trace, res);
  return res;
}

namespace {

int status_rank(const std::string& st) {
  if (st == "fault") return 3;
  if (st == "deadlock") return 2;
  if (st == "limit") return 1;
  return 0;
}

void merge_status(ScenarioRow& row, const RunResult& r) {
  const std::string st = to_string(r.outcome);
  if (status_rank(st) > status_rank(row.status)) {
    row.status = st;
    row.fault = r.outcome == RunOutcome::Fault ? to_string(r.fault_error) : "";
  }
}

void fill_common(const RunResult& r, ScenarioRow& row) {
  row.values["end_time"] = static_cast<double>(r.end_time);
  row.values["makespan"] = static_cast<double>(r.makespan);
  row.values["barriers_done"] =
      r.ranks.empty() ? 0.0 : static_cast<double>(r.ranks[0].barriers_done);
  row.values["am_sends"] = static_cast<double>(r.am_sends);
  row.values["am_dispatched"] = static_cast<double>(r.am_dispatches);
  row.values["fallback_gens"] = static_cast<double>(r.fallback_gens);
  row.values["fallback_writes"] = static_cast<double>(r.fallback_writes);
  row.values["monitor_ticks"] = static_cast<double>(r.monitor_ticks);
  row.values["gens_armed"] = static_cast<double>(r.gens_armed);
  row.values["serviced_ops"] = static_cast<double>(r.serviced_total);
  row.values["fabric_writes"] = static_cast<double>(r.fabric_writes);
  std::uint64_t queued = 0;
  std::uint64_t retired = 0;
  std::uint32_t dwq_hw = 0;
  for (const NicMetrics& n : r.nics) {
    queued += n.queued;
    retired += n.retired;
    dwq_hw = std::max(dwq_hw, n.dwq_high_water);
  }
  row.values["nic_queued"] = static_cast<double>(queued);
  row.values["nic_retired"] = static_cast<double>(retired);
  row.values["dwq_high_water"] = static_cast<double>(dwq_hw);
  std::uint32_t armed_hw = 0;
  for (const RankMetrics& m : r.ranks) armed_hw = std::max(armed_hw, m.armed_high_water);
  row.values["armed_high_water"] = static_cast<double>(armed_hw);
}

double sum_end_to_end(const RunResult& r) {
  double total = 0;
  for (const RankMetrics& m : r.ranks) total += static_cast<double>(m.end_to_end);
  return total;
}

double coord_per_sample(const RunResult& r) {
  return r.coord_samples > 0
             ? static_cast<double>(r.coord_total_ns) / static_cast<double>(r.coord_samples)
             : 0.0;
}

std::string fmt_num(double v) {
  char buf[64];
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.6f", v);
  }
  return buf;
}

void eval_expects(const Scenario& s, ScenarioOutcome& o) {
  for (const ExpectLine& e : s.expects) {
    ExpectResult res;
    res.line = e.line;
    res.text = e.key + " " + e.op + " " + e.value + (e.param.empty() ? "" : " @" + e.param);
    std::vector<const ScenarioRow*> targets;
    if (!e.param.empty()) {
      std::uint64_t want_param = 0;
      char* end = nullptr;
      want_param = std::strtoull(e.param.c_str(), &end, 0);
      for (const ScenarioRow& row : o.rows)
        if (row.param == want_param) targets.push_back(&row);
      if (targets.empty()) {
        res.actual = "no row for @" + e.param;
        o.expects.push_back(std::move(res));
        o.expects_ok = false;
        continue;
      }
    } else {
      for (const ScenarioRow& row : o.rows) targets.push_back(&row);
    }

    bool ok = true;
    std::string actual;
    if (e.key == "status" || e.key == "fault_error") {
      if (e.op != "==" && e.op != "!=") {
        ok = false;
        actual = "string keys support == and != only";
      } else {
        for (const ScenarioRow* row : targets) {
          const std::string& have = e.key == "status" ? row->status : row->fault;
          const bool match = have == e.value;
          if ((e.op == "==") != match) ok = false;
          actual = have;
        }
      }
    } else {
      const double want = std::strtod(e.value.c_str(), nullptr);
      auto check = [&](double have) {
        actual = fmt_num(have);
        const double tol = 1e-9 * std::max({1.0, std::fabs(have), std::fabs(want)});
        if (e.op == "==") return std::fabs(have - want) <= tol;
        if (e.op == "!=") return std::fabs(have - want) > tol;
        if (e.op == "<=") return have <= want + tol;
        if (e.op == ">=") return have >= want - tol;
        if (e.op == "<") return have < want;
        return have > want;
      };
      auto extra = o.extras.find(e.key);
      if (e.param.empty() && extra != o.extras.end()) {
        ok = check(extra->second);
      } else {
        bool found = false;
        for (const ScenarioRow* row : targets) {
          auto it = row->values.find(e.key);
          if (it == row->values.end()) continue;
          found = true;
          if (!check(it->second)) ok = false;
        }
        if (!found) {
          ok = false;
          actual = "unknown key";
        }
      }
    }
    res.ok = ok;
    res.actual = actual;
    o.expects_ok = o.expects_ok && ok;
    o.expects.push_back(std::move(res));
  }
}

}  // namespace

ScenarioOutcome run_scenario(const Scenario& s, const RunOptions& opt) {
  ScenarioOutcome o;
  if (!validate_scenario(s, o.issues)) {
    o.built_ok = false;
    o.status = "invalid";
    return o;
  }
  const WorkloadSpec& w = s.workload;
  auto take_run = [&](RunResult& r) {  // keep the last instance's traces
    o.coord = std::move(r.coord);
    if (opt.want_trace) o.trace = std::move(r.trace);
    for (ScenarioIssue& i : r.build_issues) o.issues.push_back(std::move(i));
    if (!r.build_issues.empty()) o.built_ok = false;
  };

  switch (w.kind) {
    case WorkloadKind::Exhaustion: {
      std::vector<std::uint64_t> sweep =
          w.p_list.empty() ? std::vector<std::uint64_t>{w.ranks} : w.p_list;
      for (std::uint64_t p : sweep) {
        ExhaustionResult er = exhaustion_study(static_cast<std::uint32_t>(p), s.nic);
        ScenarioRow row;
        row.param = p;
        row.status = "completed";
        row.values["rounds"] = er.rounds;
        row.values["predicted"] = static_cast<double>(er.predicted);
        row.values["armed_barriers"] = static_cast<double>(er.armed_barriers);
        row.values["entries_armed"] = static_cast<double>(er.entries_armed);
        row.values["prediction_match"] = er.predicted == er.armed_barriers ? 1.0 : 0.0;
        o.rows.push_back(std::move(row));
      }
      break;
    }
    case WorkloadKind::Phase: {
      std::vector<std::uint64_t> sweep =
          w.phases_list.empty() ? std::vector<std::uint64_t>{w.phases} : w.phases_list;
      for (std::uint64_t ph : sweep) {
        ScenarioRow row;
        row.param = ph;
        row.status = "completed";
        double gpu_cpp = 0;
        double host_cpp = 0;
        if (w.mode != RunMode::Host) {
          Instance inst{w.kind, w.backend, false, w.ranks, static_cast<std::uint32_t>(ph)};
          RunResult r = run_instance(s, inst, opt.want_trace);
          merge_status(row, r);
          gpu_cpp = coord_per_sample(r);
          row.values["gpu_total_ns"] = static_cast<double>(r.makespan);
          row.values["gpu_coord_per_phase"] = gpu_cpp;
          row.values["gpu_coord_max"] = static_cast<double>(r.coord_max_ns);
          take_run(r);
        }
        if (w.mode != RunMode::Gpu) {
          Instance inst{w.kind, w.backend, true, w.ranks, static_cast<std::uint32_t>(ph)};
          RunResult r = run_instance(s, inst, opt.want_trace);
          merge_status(row, r);
          host_cpp = coord_per_sample(r);
          row.values["host_total_ns"] = static_cast<double>(r.makespan);
          row.values["host_coord_per_phase"] = host_cpp;
          const double total = sum_end_to_end(r);
          row.values["coord_fraction_pct"] =
              total > 0 ? 100.0 * static_cast<double>(r.coord_total_ns) / total : 0.0;
          take_run(r);
        }
        if (w.mode == RunMode::Compare)
          row.values["sync_ratio"] = gpu_cpp > 0 ? host_cpp / gpu_cpp : 0.0;
        o.rows.push_back(std::move(row));
      }
      if (w.mode != RunMode::Host && o.rows.size() >= 2) {
        double lo = std::numeric_limits<double>::max();
        double hi = 0;
        for (const ScenarioRow& row : o.rows) {
          auto it = row.values.find("gpu_coord_per_phase");
          if (it == row.values.end()) continue;
          lo = std::min(lo, it->second);
          hi = std::max(hi, it->second);
        }
        o.extras["coord_flatness_pct"] = lo > 0 ? 100.0 * (hi - lo) / lo : (hi > 0 ? 100.0 : 0.0);
      }
      break;
    }
    case WorkloadKind::Jacobi: {
      std::vector<std::uint64_t> sweep =
          w.p_list.empty() ? std::vector<std::uint64_t>{w.ranks} : w.p_list;
      double base_gpu = 0;
      double base_host = 0;
      bool all_ge = true;
      for (std::uint64_t p : sweep) {
        ScenarioRow row;
        row.param = p;
        row.status = "completed";
        double gpu_eff = 0;
        double host_eff = 0;
        if (w.mode != RunMode::Host) {
          Instance inst{w.kind, w.backend, false, static_cast<std::uint32_t>(p), 0};
          RunResult r = run_instance(s, inst, opt.want_trace);
          merge_status(row, r);
          const double total = static_cast<double>(r.makespan);
          if (base_gpu == 0) base_gpu = total;
          gpu_eff = total > 0 ? base_gpu / total : 0.0;
          row.values["gpu_total_ns"] = total;
          row.values["gpu_efficiency"] = gpu_eff;
          take_run(r);
        }
        if (w.mode != RunMode::Gpu) {
          Instance inst{w.kind, w.backend, true, static_cast<std::uint32_t>(p), 0};
          RunResult r = run_instance(s, inst, opt.want_trace);
          merge_status(row, r);
          const double total = static_cast<double>(r.makespan);
          if (base_host == 0) base_host = total;
          host_eff = total > 0 ? base_host / total : 0.0;
          row.values["host_total_ns"] = total;
          row.values["host_efficiency"] = host_eff;
          take_run(r);
        }
        if (w.mode == RunMode::Compare && gpu_eff + 1e-12 < host_eff) all_ge = false;
        o.rows.push_back(std::move(row));
      }
      if (w.mode == RunMode::Compare) o.extras["gpu_ge_host_all"] = all_ge ? 1.0 : 0.0;
      break;
    }
    case WorkloadKind::Custom:
    case WorkloadKind::AmFuzz: {
      Instance inst{w.kind, w.backend, false, w.ranks, 0};
      RunResult r = run_instance(s, inst, opt.want_trace);
      ScenarioRow row;
      row.status = "completed";
      merge_status(row, r);
      fill_common(r, row);
      take_run(r);
      o.rows.push_back(std::move(row));
      break;
    }
  }

  for (const ScenarioRow& row : o.rows)
    if (status_rank(row.status) > status_rank(o.status)) o.status = row.status;
  eval_expects(s, o);
  return o;
}

std::string outcome_csv(const ScenarioOutcome& o) {
  std::set<std::string> keys;
  for (const ScenarioRow& row : o.rows)
    for (const auto& [k, _] : row.values) keys.insert(k);
  std::ostringstream out;
  out << "param,status,fault";
  for (const std::string& k : keys) out << "," << k;
  out << "\n";
  for (const ScenarioRow& row : o.rows) {
    out << row.param << "," << row.status << "," << row.fault;
    for (const std::string& k : keys) {
      auto it = row.values.find(k);
      out << "," << (it != row.values.end() ? fmt_num(it->second) : "");
    }
    out << "\n";
  }
  if (!o.extras.empty()) {
    out << "# extras\n";
    for (const auto& [k, v] : o.extras) out << k << "," << fmt_num(v) << "\n";
  }
  return out.str();
}

std::string outcome_json(const Scenario& s, const ScenarioOutcome& o) {
  nlohmann::ordered_json j;
  j["workload"] = to_string(s.workload.kind);
  j["backend"] = to_string(s.workload.backend);
  j["mode"] = to_string(s.workload.mode);
  j["seed"] = s.sim.seed;
  j["status"] = o.status;
  j["ok"] = o.built_ok && o.expects_ok;
  j["rows"] = nlohmann::ordered_json::array();
  for (const ScenarioRow& row : o.rows) {
    nlohmann::ordered_json jr;
    jr["param"] = row.param;
    jr["status"] = row.status;
    if (!row.fault.empty()) jr["fault"] = row.fault;
    nlohmann::ordered_json vals;
    for (const auto& [k, v] : row.values) vals[k] = v;
    jr["values"] = std::move(vals);
    j["rows"].push_back(std::move(jr));
  }
  nlohmann::ordered_json extras;
  for (const auto& [k, v] : o.extras) extras[k] = v;
  j["extras"] = std::move(extras);
  j["expects"] = nlohmann::ordered_json::array();
  for (const ExpectResult& e : o.expects) {
    nlohmann::ordered_json je;
    je["line"] = e.line;
    je["expect"] = e.text;
    je["ok"] = e.ok;
    je["actual"] = e.actual;
    j["expects"].push_back(std::move(je));
  }
  if (!o.issues.empty()) {
    j["issues"] = nlohmann::ordered_json::array();
    for (const ScenarioIssue& i : o.issues) {
      nlohmann::ordered_json ji;
      ji["line"] = i.line;
      ji["message"] = i.message;
      j["issues"].push_back(std::move(ji));
    }
  }
  return j.dump(2) + "\n";
}

bool load_scenario_file(const std::string& path, Scenario& out,
                        std::vector<ScenarioIssue>& issues) {
  std::ifstream in(path);
  if (!in) {
    issues.push_back({0, "cannot read scenario file '" + path + "'"});
    return false;
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), out, issues);
}

}  // namespace trigsim
