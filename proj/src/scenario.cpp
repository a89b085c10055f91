// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/scenario.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

namespace trigsim {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t first = s.find_first_not_of(ws);
  if (first == std::string::npos) return "";
  const std::size_t last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-') return false;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 0);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  out = v;
  return true;
}

bool parse_u32(const std::string& s, std::uint32_t& out) {
  std::uint64_t v = 0;
  if (!parse_u64(s, v) || v > 0xffffffffull) return false;
  out = static_cast<std::uint32_t>(v);
  return true;
}

bool parse_list(const std::string& s, std::vector<std::uint64_t>& out) {
  out.clear();
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    std::uint64_t v = 0;
    if (!parse_u64(trim(item), v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

bool is_expect_op(const std::string& op) {
  return op == "==" || op == "!=" || op == "<=" || op == ">=" || op == "<" || op == ">";
}

/// Shared by the section parser and --set overrides.
bool set_kv(Scenario& s, const std::string& section, const std::string& key,
            const std::string& value, std::string& error) {
  auto bad_value = [&]() {
    error = "bad value '" + value + "' for " + section + "." + key;
    return false;
  };
  auto u64 = [&](std::uint64_t& dst) { return parse_u64(value, dst) ? true : bad_value(); };
  auto u32 = [&](std::uint32_t& dst) { return parse_u32(value, dst) ? true : bad_value(); };
  if (section == "sim") {
    if (key == "time_limit") return u64(s.sim.time_limit);
    if (key == "seed") return u64(s.sim.seed);
  } else if (section == "nic") {
    if (key == "dwq_capacity") return u32(s.nic.dwq_capacity);
    if (key == "counter_max") return u64(s.nic.counter_max);
    if (key == "doorbell_latency") return u64(s.nic.doorbell_latency);
    if (key == "nic_exec_latency") return u64(s.nic.nic_exec_latency);
    if (key == "flush_cost") return u64(s.nic.flush_cost);
    if (key == "ranks_per_nic") return u32(s.ranks_per_nic);
  } else if (section == "monitor") {
    if (key == "poll_interval") return u64(s.monitor.poll_interval);
    if (key == "per_op_overhead") return u64(s.monitor.per_op_overhead);
    if (key == "paused_from") return u64(s.monitor.paused_from);
    if (key == "paused_until") return u64(s.monitor.paused_until);
    if (key == "stage_ahead_slots") return u32(s.monitor.stage_ahead_slots);
  } else if (section == "ib") {
    if (key == "wqe_build_latency") return u64(s.ib.wqe_build_latency);
    if (key == "doorbell_latency") return u64(s.ib.doorbell_latency);
    if (key == "send_ring") return u32(s.ib.send_ring);
    if (key == "cq_ring") return u32(s.ib.cq_ring);
  } else if (section == "costs") {
    if (key == "host_sync") return u64(s.costs.host_sync);
    if (key == "wire") return u64(s.costs.wire);
    if (key == "compute_total") return u64(s.costs.compute_total);
  } else if (section == "workload") {
    WorkloadSpec& w = s.workload;
    if (key == "kind") {
      if (value == "custom") w.kind = WorkloadKind::Custom;
      else if (value == "phase") w.kind = WorkloadKind::Phase;
      else if (value == "exhaustion") w.kind = WorkloadKind::Exhaustion;
      else if (value == "jacobi") w.kind = WorkloadKind::Jacobi;
      else if (value == "am_fuzz") w.kind = WorkloadKind::AmFuzz;
      else return bad_value();
      return true;
    }
    if (key == "backend") {
      if (value == "ofi") w.backend = BackendKind::Ofi;
      else if (value == "ib") w.backend = BackendKind::Ib;
      else return bad_value();
      return true;
    }
    if (key == "mode") {
      if (value == "gpu") w.mode = RunMode::Gpu;
      else if (value == "host") w.mode = RunMode::Host;
      else if (value == "compare") w.mode = RunMode::Compare;
      else return bad_value();
      return true;
    }
    if (key == "ranks") return u32(w.ranks);
    if (key == "p_list") return parse_list(value, w.p_list) ? true : bad_value();
    if (key == "phases") return u32(w.phases);
    if (key == "phases_list") return parse_list(value, w.phases_list) ? true : bad_value();
    if (key == "iters") return u32(w.iters);
    if (key == "per_iter_compute") return u64(w.per_iter_compute);
    if (key == "halo_bytes") return u64(w.halo_bytes);
    if (key == "am_ring") return u32(w.am_ring);
    if (key == "am_batch") return u32(w.am_batch);
    if (key == "fuzz_rounds") return u32(w.fuzz.rounds);
    if (key == "fuzz_burst_max") return u32(w.fuzz.burst_max);
    if (key == "fuzz_handlers") return u32(w.fuzz.handlers);
    if (key == "fuzz_args_max") return u32(w.fuzz.args_max);
    if (key == "fuzz_gap_max") return u64(w.fuzz.gap_max);
    if (key == "fuzz_pair_cap") return u32(w.fuzz.pair_cap);
  } else {
    error = "unknown section '" + section + "'";
    return false;
  }
  error = "unknown key '" + key + "' in [" + section + "]";
  return false;
}

enum class SectionKind : std::uint8_t {
  None, Kv, ProgramRank, ProgramAll, Handler, Prestage, Expect, Qp
};

}  // namespace

bool parse_scenario(const std::string& text, Scenario& out,
                    std::vector<ScenarioIssue>& issues) {
  const std::size_t before = issues.size();
  SectionKind kind = SectionKind::None;
  std::string kv_section;
  std::uint32_t section_rank = 0;
  std::string handler_name;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.push_back({lineno, "unterminated section header"});
        continue;
      }
      const std::vector<std::string> head = tokenize(line.substr(1, line.size() - 2));
      kind = SectionKind::None;
      if (head.size() == 1 &&
          (head[0] == "sim" || head[0] == "nic" || head[0] == "monitor" || head[0] == "ib" ||
           head[0] == "costs" || head[0] == "workload")) {
        kind = SectionKind::Kv;
        kv_section = head[0];
      } else if (head.size() == 1 && head[0] == "expect") {
        kind = SectionKind::Expect;
      } else if (head.size() == 1 && head[0] == "qp") {
        kind = SectionKind::Qp;
      } else if (head.size() == 2 && head[0] == "program" && head[1] == "all") {
        kind = SectionKind::ProgramAll;
      } else if (head.size() == 3 && head[0] == "program" && head[1] == "rank" &&
                 parse_u32(head[2], section_rank)) {
        kind = SectionKind::ProgramRank;
        out.programs[section_rank];  // an explicitly empty program is one too
      } else if (head.size() == 3 && head[0] == "prestage" && head[1] == "rank" &&
                 parse_u32(head[2], section_rank)) {
        kind = SectionKind::Prestage;
      } else if (head.size() == 2 && head[0] == "handler") {
        kind = SectionKind::Handler;
        handler_name = head[1];
        out.handlers[handler_name];  // empty handlers are no-op dispatch targets
      } else {
        issues.push_back({lineno, "unknown section '" + line + "'"});
      }
      continue;
    }

    switch (kind) {
      case SectionKind::Kv: {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
          issues.push_back({lineno, "expected key = value"});
          break;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        std::string error;
        if (!set_kv(out, kv_section, key, value, error)) issues.push_back({lineno, error});
        break;
      }
      case SectionKind::ProgramRank:
        out.programs[section_rank].push_back({lineno, tokenize(line)});
        break;
      case SectionKind::ProgramAll:
        out.program_all.push_back({lineno, tokenize(line)});
        break;
      case SectionKind::Handler:
        out.handlers[handler_name].push_back({lineno, tokenize(line)});
        break;
      case SectionKind::Prestage:
        out.prestage[section_rank].push_back({lineno, tokenize(line)});
        break;
      case SectionKind::Expect: {
        const std::vector<std::string> toks = tokenize(line);
        if (toks.size() < 3 || toks.size() > 4 || !is_expect_op(toks[1]) ||
            (toks.size() == 4 && (toks[3].size() < 2 || toks[3][0] != '@'))) {
          issues.push_back({lineno, "expected: KEY OP VALUE [@SWEEP]"});
          break;
        }
        ExpectLine e;
        e.line = lineno;
        e.key = toks[0];
        e.op = toks[1];
        e.value = toks[2];
        if (toks.size() == 4) e.param = toks[3].substr(1);
        out.expects.push_back(std::move(e));
        break;
      }
      case SectionKind::Qp: {
        const std::vector<std::string> toks = tokenize(line);
        QpDecl q;
        q.line = lineno;
        if (toks.size() != 3 || toks[0] != "pair" || !parse_u32(toks[1], q.src) ||
            !parse_u32(toks[2], q.dst)) {
          issues.push_back({lineno, "expected: pair SRC_RANK DST_RANK"});
          break;
        }
        out.qps.push_back(q);
        break;
      }
      case SectionKind::None:
        issues.push_back({lineno, "content before any section header"});
        break;
    }
  }
  return issues.size() == before;
}

bool apply_override(Scenario& s, const std::string& dotted_key, const std::string& value,
                    std::string& error) {
  const std::size_t dot = dotted_key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= dotted_key.size()) {
    error = "override key must be section.key";
    return false;
  }
  return set_kv(s, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value, error);
}

namespace {

struct LowerCtx {
  const Scenario& s;
  std::uint32_t ranks;
  const std::vector<std::string>& handler_names;
  std::vector<ScenarioIssue>& issues;
  bool ok = true;

  void issue(int line, std::string msg) {
    issues.push_back({line, std::move(msg)});
    ok = false;
  }
  bool ib() const { return s.workload.backend == BackendKind::Ib; }
  bool handler_id(const std::string& name, std::uint32_t& out) const {
    for (std::size_t i = 0; i < handler_names.size(); ++i)
      if (handler_names[i] == name) {
        out = static_cast<std::uint32_t>(i);
        return true;
      }
    return false;
  }
};

bool counter_ref_of(const std::vector<std::string>& names, const std::string& name,
                    std::uint32_t& out) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) {
      out = static_cast<std::uint32_t>(i);
      return true;
    }
  return false;
}

void lower_step(LowerCtx& cx, const RawLine& rl, bool in_handler,
                const std::vector<std::string>& counter_names, Program& prog) {
  const std::vector<std::string>& t = rl.tokens;
  const std::string& verb = t[0];
  auto arity = [&](std::size_t n) {
    if (t.size() == n) return true;
    cx.issue(rl.line, "'" + verb + "' takes " + std::to_string(n - 1) + " argument(s)");
    return false;
  };
  if (in_handler && verb != "compute" && verb != "wait_until" && verb != "am_send") {
    cx.issue(rl.line, "'" + verb + "' is not allowed in a handler");
    return;
  }
  if (verb == "compute") {
    std::uint64_t ns = 0;
    if (!arity(2)) return;
    if (!parse_u64(t[1], ns)) return cx.issue(rl.line, "bad duration");
    prog.push_back(StepCompute{ns});
  } else if (verb == "trigger") {
    if (cx.ib()) return cx.issue(rl.line, "'trigger' needs the triggered backend");
    if (!arity(3)) return;
    StepTrigger st;
    if (!counter_ref_of(counter_names, t[1], st.counter_ref))
      return cx.issue(rl.line, "unknown counter '" + t[1] + "'");
    if (!parse_u64(t[2], st.value)) return cx.issue(rl.line, "bad doorbell value");
    prog.push_back(st);
  } else if (verb == "wait_until") {
    if (!arity(4)) return;
    StepWaitUntil sw;
    if (!parse_u32(t[1], sw.sig_index) || sw.sig_index >= 256)
      return cx.issue(rl.line, "signal index must be in [0, 255]");
    if (!cmp_from_string(t[2], sw.cmp))
      return cx.issue(rl.line, "bad comparison '" + t[2] + "'");
    if (!parse_u64(t[3], sw.value)) return cx.issue(rl.line, "bad value");
    prog.push_back(sw);
  } else if (verb == "quiet") {
    if (!arity(1)) return;
    prog.push_back(StepQuiet{});
  } else if (verb == "barrier_all") {
    if (!arity(1)) return;
    prog.push_back(StepBarrierAll{});
  } else if (verb == "am_send") {
    if (t.size() < 3) return cx.issue(rl.line, "expected: am_send PEER HANDLER [BYTE...]");
    if (in_handler && !cx.ib())
      return cx.issue(rl.line, "handlers may not send on the triggered backend");
    StepAmSend sa;
    if (!parse_u32(t[1], sa.peer) || sa.peer >= cx.ranks)
      return cx.issue(rl.line, "peer out of range");
    if (!cx.handler_id(t[2], sa.handler))
      return cx.issue(rl.line, "unknown handler '" + t[2] + "'");
    for (std::size_t i = 3; i < t.size(); ++i) {
      std::uint64_t byte = 0;
      if (!parse_u64(t[i], byte) || byte > 255)
        return cx.issue(rl.line, "argument bytes must be in [0, 255]");
      sa.args.push_back(static_cast<std::uint8_t>(byte));
    }
    if (sa.args.size() > 112) return cx.issue(rl.line, "at most 112 argument bytes");
    prog.push_back(std::move(sa));
  } else if (verb == "am_poll_dispatch") {
    if (!arity(2)) return;
    StepAmPoll sp;
    if (!parse_u64(t[1], sp.target)) return cx.issue(rl.line, "bad dispatch target");
    prog.push_back(sp);
  } else if (verb == "ib_put") {
    if (!cx.ib()) return cx.issue(rl.line, "'ib_put' needs the gpu-initiated backend");
    if (t.size() != 5 && t.size() != 7)
      return cx.issue(rl.line, "expected: ib_put PEER SRC_OFF DST_OFF SIZE [sig INDEX]");
    StepIbPut sp;
    if (!parse_u32(t[1], sp.peer) || sp.peer >= cx.ranks)
      return cx.issue(rl.line, "peer out of range");
    if (!parse_u64(t[2], sp.src_off) || !parse_u64(t[3], sp.dst_off) ||
        !parse_u64(t[4], sp.size))
      return cx.issue(rl.line, "bad offset or size");
    if (t.size() == 7) {
      if (t[5] != "sig" || !parse_u32(t[6], sp.sig_index) || sp.sig_index >= 256)
        return cx.issue(rl.line, "expected: sig INDEX (0..255)");
      sp.has_sig = true;
    }
    prog.push_back(sp);
  } else if (verb == "halo_exchange") {
    if (cx.ib()) return cx.issue(rl.line, "'halo_exchange' needs the triggered backend");
    if (!arity(1)) return;
    prog.push_back(StepHaloExchange{});
  } else if (verb == "host_sync") {
    std::uint64_t ns = 0;
    if (!arity(2)) return;
    if (!parse_u64(t[1], ns)) return cx.issue(rl.line, "bad duration");
    prog.push_back(StepHostSync{ns});
  } else {
    cx.issue(rl.line, "unknown step '" + verb + "'");
  }
}

void lower_prestage(LowerCtx& cx, const std::vector<RawLine>& lines, LoweredRank& out) {
  for (const RawLine& rl : lines) {
    const std::vector<std::string>& t = rl.tokens;
    const std::string& verb = t[0];
    if (verb == "counter") {
      if (t.size() != 2) {
        cx.issue(rl.line, "expected: counter NAME");
        continue;
      }
      std::uint32_t dummy = 0;
      if (counter_ref_of(out.counter_names, t[1], dummy)) {
        cx.issue(rl.line, "duplicate counter '" + t[1] + "'");
        continue;
      }
      out.counter_names.push_back(t[1]);
      continue;
    }
    PrestagedEntry e;
    e.line = rl.line;
    bool shape_ok = false;
    if (verb == "put" && (t.size() == 7 || t.size() == 9)) {
      e.is_put = true;
      shape_ok = counter_ref_of(out.counter_names, t[1], e.counter_ref) &&
                 parse_u64(t[2], e.threshold) && parse_u32(t[3], e.peer) &&
                 parse_u64(t[4], e.src_off) && parse_u64(t[5], e.dst_off) &&
                 parse_u64(t[6], e.size);
      if (shape_ok && t.size() == 9) {
        shape_ok = t[7] == "sig" && parse_u32(t[8], e.sig_index) && e.sig_index < 256;
        e.has_sig = true;
      }
    } else if (verb == "signal" && t.size() == 6) {
      shape_ok = counter_ref_of(out.counter_names, t[1], e.counter_ref) &&
                 parse_u64(t[2], e.threshold) && parse_u32(t[3], e.peer) &&
                 parse_u32(t[4], e.sig_index) && e.sig_index < 256 &&
                 parse_u64(t[5], e.value);
    } else {
      cx.issue(rl.line,
               "expected: counter NAME | put CTR THRESH PEER SRC DST SIZE [sig N] | "
               "signal CTR THRESH PEER SIG VALUE");
      continue;
    }
    if (!shape_ok) {
      cx.issue(rl.line, "bad '" + verb + "' entry (check counter name and numbers)");
      continue;
    }
    if (e.peer >= cx.ranks) {
      cx.issue(rl.line, "peer out of range");
      continue;
    }
    if (e.threshold < 1 || e.threshold > cx.s.nic.counter_max) {
      cx.issue(rl.line, "threshold must be in [1, counter_max]");
      continue;
    }
    out.entries.push_back(e);
  }
}

void check_qps(const Scenario& s, std::uint32_t ranks, std::vector<ScenarioIssue>& issues,
               bool& ok) {
  std::map<std::pair<RankId, RankId>, int> seen;
  for (const QpDecl& q : s.qps) {
    if (q.src >= ranks || q.dst >= ranks || q.src == q.dst) {
      issues.push_back({q.line, "queue pair endpoints must be distinct ranks in range"});
      ok = false;
      continue;
    }
    auto [it, inserted] = seen.emplace(std::make_pair(q.src, q.dst), q.line);
    if (!inserted) {
      issues.push_back({q.line, "connection " + std::to_string(q.src) + " -> " +
                                    std::to_string(q.dst) + " already owned (line " +
                                    std::to_string(it->second) + ")"});
      ok = false;
    }
  }
}

}  // namespace

bool lower_scenario(const Scenario& s, std::uint32_t ranks, LoweredScenario& out,
                    std::vector<ScenarioIssue>& issues) {
  out = LoweredScenario{};
  for (const auto& [name, _] : s.handlers) out.handler_names.push_back(name);  // sorted map
  LowerCtx cx{s, ranks, out.handler_names, issues};

  for (std::size_t i = 0; i < out.handler_names.size(); ++i) {
    Program hp;
    for (const RawLine& rl : s.handlers.at(out.handler_names[i]))
      lower_step(cx, rl, /*in_handler=*/true, {}, hp);
    out.handler_programs[static_cast<std::uint32_t>(i)] = std::move(hp);
  }

  for (const auto& [rank, _] : s.programs)
    if (rank >= ranks) cx.issue(0, "[program rank " + std::to_string(rank) + "] out of range");
  for (const auto& [rank, _] : s.prestage)
    if (rank >= ranks) cx.issue(0, "[prestage rank " + std::to_string(rank) + "] out of range");

  out.ranks.assign(ranks, {});
  for (std::uint32_t rank = 0; rank < ranks; ++rank) {
    LoweredRank& lr = out.ranks[rank];
    if (auto it = s.prestage.find(rank); it != s.prestage.end())
      lower_prestage(cx, it->second, lr);
    const std::vector<RawLine>* lines = nullptr;
    if (auto it = s.programs.find(rank); it != s.programs.end()) lines = &it->second;
    else if (!s.program_all.empty()) lines = &s.program_all;
    if (lines != nullptr)
      for (const RawLine& rl : *lines) lower_step(cx, rl, false, lr.counter_names, lr.program);
  }

  // Barriers rendezvous all ranks; unequal counts would hang the last epoch.
  std::uint64_t expected_barriers = 0;
  bool first = true;
  for (std::uint32_t rank = 0; rank < ranks; ++rank) {
    std::uint64_t count = 0;
    for (const DeviceStep& st : out.ranks[rank].program)
      if (std::holds_alternative<StepBarrierAll>(st)) ++count;
    if (first) {
      expected_barriers = count;
      first = false;
    } else if (count != expected_barriers) {
      cx.issue(0, "rank " + std::to_string(rank) + " has " + std::to_string(count) +
                      " barrier_all steps; rank 0 has " + std::to_string(expected_barriers));
    }
  }

  if (cx.ib() && !s.prestage.empty())
    cx.issue(0, "pre-staged entries need the triggered backend");
  check_qps(s, ranks, issues, cx.ok);
  return cx.ok;
}

bool validate_scenario(const Scenario& s, std::vector<ScenarioIssue>& issues) {
  bool ok = true;
  const WorkloadSpec& w = s.workload;
  auto file_issue = [&](std::string msg) {
    issues.push_back({0, std::move(msg)});
    ok = false;
  };
  if (w.ranks < 1 || w.ranks > 65536) file_issue("ranks must be in [1, 65536]");
  const std::uint64_t p_floor = w.kind == WorkloadKind::Exhaustion ? 2 : 1;
  for (std::uint64_t p : w.p_list)
    if (p < p_floor || p > 65536)
      file_issue("p_list entry " + std::to_string(p) + " out of range");
  if (w.kind != WorkloadKind::Custom &&
      (!s.programs.empty() || !s.program_all.empty() || !s.prestage.empty() ||
       !s.handlers.empty()))
    file_issue("program, prestage, and handler sections apply only to kind=custom");
  if (w.kind == WorkloadKind::Exhaustion && w.backend == BackendKind::Ib)
    file_issue("the exhaustion study measures triggered-backend arming");
  if (w.mode == RunMode::Compare &&
      (w.kind == WorkloadKind::Custom || w.kind == WorkloadKind::Exhaustion))
    file_issue("compare mode applies to phase, jacobi, and am_fuzz workloads");
  if (w.am_batch < 1) file_issue("am_batch must be >= 1");
  if (w.kind == WorkloadKind::AmFuzz && w.fuzz.pair_cap > w.am_ring)
    file_issue("fuzz_pair_cap must not exceed am_ring");
  if (w.kind == WorkloadKind::Custom) {
    LoweredScenario lowered;
    if (!lower_scenario(s, w.ranks, lowered, issues)) ok = false;
  } else {
    check_qps(s, w.ranks, issues, ok);
  }
  return ok;
}

const char* to_string(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::Custom: return "custom";
    case WorkloadKind::Phase: return "phase";
    case WorkloadKind::Exhaustion: return "exhaustion";
    case WorkloadKind::Jacobi: return "jacobi";
    case WorkloadKind::AmFuzz: return "am_fuzz";
  }
  return "?";
}

const char* to_string(BackendKind backend) {
  return backend == BackendKind::Ofi ? "ofi" : "ib";
}

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Gpu: return "gpu";
    case RunMode::Host: return "host";
    case RunMode::Compare: return "compare";
  }
  return "?";
}

}  // namespace trigsim
