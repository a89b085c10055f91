// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0
//
// trigsim command line: run or validate scenario files.
//   trigsim run scenarios/table1.scn --out out.csv
//   trigsim run s.scn --set workload.ranks=8 --format json --out out.json
//   trigsim validate s.scn

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trigsim/runner.hpp"
#include "trigsim/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitExpectFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRunFailed = 3;

void print_issues(const std::vector<trigsim::ScenarioIssue>& issues) {
  for (const trigsim::ScenarioIssue& i : issues) {
    if (i.line > 0)
      std::cerr << "line " << i.line << ": " << i.message << "\n";
    else
      std::cerr << "scenario: " << i.message << "\n";
  }
}

bool apply_sets(trigsim::Scenario& s, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "--set needs section.key=value, got '" << kv << "'\n";
      return false;
    }
    std::string error;
    if (!trigsim::apply_override(s, kv.substr(0, eq), kv.substr(eq + 1), error)) {
      std::cerr << "--set " << kv << ": " << error << "\n";
      return false;
    }
  }
  return true;
}

void print_summary(const trigsim::Scenario& s, const trigsim::ScenarioOutcome& o) {
  std::cout << "workload=" << trigsim::to_string(s.workload.kind)
            << " backend=" << trigsim::to_string(s.workload.backend)
            << " mode=" << trigsim::to_string(s.workload.mode) << " seed=" << s.sim.seed
            << " status=" << o.status << "\n";
  for (const trigsim::ScenarioRow& row : o.rows) {
    std::cout << "row param=" << row.param << " status=" << row.status;
    if (!row.fault.empty()) std::cout << " fault=" << row.fault;
    for (const auto& [k, v] : row.values) {
      char buf[64];
      if (v == static_cast<double>(static_cast<long long>(v)))
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
      else
        std::snprintf(buf, sizeof buf, "%.6f", v);
      std::cout << " " << k << "=" << buf;
    }
    std::cout << "\n";
  }
  for (const auto& [k, v] : o.extras) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::cout << "extra " << k << "=" << buf << "\n";
  }
  for (const trigsim::ExpectResult& e : o.expects) {
    std::cout << "expect line " << e.line << ": " << e.text << " -> "
              << (e.ok ? "ok" : "FAIL");
    if (!e.ok && !e.actual.empty()) std::cout << " (actual " << e.actual << ")";
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator for GPU-triggered communication runtimes"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::vector<std::string> sets;
  std::string trace_path;
  std::string out_path;
  std::string format = "csv";
  bool assert_expects = false;
  std::uint64_t seed = 0;

  CLI::App* run_cmd = app.add_subcommand("run", "Run a scenario and report metrics");
  run_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  run_cmd->add_option("--set", sets, "Override section.key=value (repeatable)");
  run_cmd->add_option("--seed", seed, "Override [sim] seed");
  run_cmd->add_option("--trace", trace_path, "Write the engine event trace to a file");
  run_cmd->add_option("--out", out_path, "Write results to a file");
  run_cmd->add_option("--format", format, "Output format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  run_cmd->add_flag("--assert", assert_expects, "Exit non-zero when an [expect] line fails");

  CLI::App* validate_cmd = app.add_subcommand("validate", "Parse and validate a scenario");
  validate_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  validate_cmd->add_option("--set", sets, "Override section.key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  trigsim::Scenario scenario;
  std::vector<trigsim::ScenarioIssue> issues;
  if (!trigsim::load_scenario_file(scenario_path, scenario, issues)) {
    print_issues(issues);
    return kExitUsage;
  }
  if (!apply_sets(scenario, sets)) return kExitUsage;

  if (validate_cmd->parsed()) {
    std::vector<trigsim::ScenarioIssue> problems;
    if (!trigsim::validate_scenario(scenario, problems)) {
      print_issues(problems);
      return kExitUsage;
    }
    std::cout << "scenario ok: workload=" << trigsim::to_string(scenario.workload.kind)
              << " backend=" << trigsim::to_string(scenario.workload.backend)
              << " ranks=" << scenario.workload.ranks << "\n";
    return kExitOk;
  }

  if (run_cmd->count("--seed") > 0) scenario.sim.seed = seed;
  trigsim::RunOptions opt;
  opt.want_trace = !trace_path.empty();
  const trigsim::ScenarioOutcome outcome = trigsim::run_scenario(scenario, opt);
  if (!outcome.built_ok) {
    print_issues(outcome.issues);
    return kExitUsage;
  }
  print_summary(scenario, outcome);

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot write '" << out_path << "'\n";
      return kExitUsage;
    }
    out << (format == "json" ? trigsim::outcome_json(scenario, outcome)
                             : trigsim::outcome_csv(outcome));
  }
  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) {
      std::cerr << "cannot write '" << trace_path << "'\n";
      return kExitUsage;
    }
    trigsim::TraceLog log;
    log.enable(true);
    for (const trigsim::TraceEvent& ev : outcome.trace) log.record(ev);
    log.write_text(out);
  }

  if (assert_expects && !outcome.expects_ok) return kExitExpectFailed;
  if (outcome.expects.empty() && outcome.status != "completed") return kExitRunFailed;
  return kExitOk;
}
