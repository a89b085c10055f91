// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "trigsim/coordination.hpp"
#include "trigsim/device.hpp"
#include "trigsim/engine.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/nic_cxi.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

struct MonitorConfig {
  SimTime poll_interval = 1000;    // progress tick period
  SimTime per_op_overhead = 1000;  // host cost per serviced/issued op
  SimTime paused_from = 0;         // [paused_from, paused_until): no NIC
  SimTime paused_until = 0;        //   servicing or arming (lag watch stays on)
  std::uint32_t stage_ahead_slots = 2;  // generations armed ahead (1 or 2)
};

inline constexpr std::uint64_t kNoAmIndex = ~0ull;

/// One entry of a generation's arming plan.
struct PlannedEntry {
  std::uint64_t threshold = 0;
  NicOp op;
  WritebackSpec writeback;
  std::uint64_t am_index = kNoAmIndex;  // AM-log send annotated at retire
};
using GenPlanFn = std::function<std::vector<PlannedEntry>(std::uint64_t gen)>;

/// One pre-planned active-message send on the triggered backend: the slot
/// writes the armed entry performs, plus what the device needs to record.
struct PlannedSend {
  RankId receiver = kNoRank;
  std::uint32_t handler = 0;
  std::uint64_t seq = 0;
  MemAddr body_dst;
  MemAddr seq_dst;
  std::vector<std::uint8_t> body;
  std::size_t log_index = 0;
};

/// A stream of pre-staged generations on one rank (barrier epochs, halo
/// iterations, or batches of AM sends). Generation g runs on slot g % 2
/// with its own trigger counter; the readiness word counts generations made
/// ready — armed, or taken over by host fallback.
struct TriggeredStream {
  enum class Kind : std::uint8_t { Barrier, Halo, AmBatch };
  enum class GenState : std::uint8_t {
    Unarmed,
    Armed,
    ArmFailed,  // partial arm cancelled; fallback owns the generation
    FallbackInProgress,
    FallbackDone,
    Done,  // every entry released, completed, consumed, retired
  };
  static constexpr std::uint64_t kNoGen = ~0ull;

  Kind kind = Kind::Barrier;
  std::uint32_t stream_id = kBarrierStream;
  RankId rank = kNoRank;
  CxiNic* nic = nullptr;
  std::uint64_t total = 0;    // generations the program will request
  std::uint32_t batch = 1;    // device actions per generation (AmBatch > 1)
  std::uint64_t actions = 0;  // raw device actions across all generations
  CounterId counters[2] = {0, 0};
  GenPlanFn plan;

  std::vector<GenState> states;
  std::vector<std::uint32_t> pending;      // unretired armed entries per gen
  std::vector<std::uint32_t> fb_expected;  // host writes a fallback gen needs
  std::vector<std::uint32_t> fb_issued;
  std::uint64_t next_arm = 0;
  std::uint64_t readiness = 0;  // host mirror of the device-visible word
  std::uint64_t lag_gen = kNoGen;
  SimTime lag_since = 0;

  void init_states() {
    states.assign(total, GenState::Unarmed);
    pending.assign(total, 0);
    fb_expected.assign(total, 0);
    fb_issued.assign(total, 0);
  }
  bool gen_terminal(std::uint64_t g) const {
    return states[g] == GenState::Done || states[g] == GenState::FallbackDone;
  }
  /// Handoff contract: a device trigger for epoch e is legal only once the
  /// readiness word covers it.
  Status check_trigger(std::uint64_t epoch) const {
    return epoch <= readiness ? Status::Ok() : Status::Fail(SimError::HandoffViolation);
  }
};

/// The host progress engine: one actor per NIC, standing in for the
/// progress thread on the node that hosts that NIC's ranks. Each tick it
/// consumes the NIC's completion records (charging per_op_overhead each),
/// retires entries, advances stream generations (counter reset, re-arm,
/// readiness write), and watches for devices outrunning the arming
/// pipeline — a lag that persists a full poll interval triggers
/// host-issued fallback for the stuck generation. Ticks are daemon
/// events: the monitor stops ticking once no source of future work
/// remains, so runs end Idle or Deadlock on the engine's own verdict.
class HostMonitor {
 public:
  HostMonitor(Engine& engine, MemoryPool& memory, Fabric& fabric, CoordContext& ctx,
              const Layout& layout, MonitorConfig cfg)
      : engine_(engine), memory_(memory), fabric_(fabric), ctx_(ctx), layout_(layout),
        cfg_(cfg) {
    if (cfg_.stage_ahead_slots < 1) cfg_.stage_ahead_slots = 1;
    if (cfg_.stage_ahead_slots > 2) cfg_.stage_ahead_slots = 2;
  }

  const MonitorConfig& config() const { return cfg_; }
  const HostCapability& capability() const { return cap_; }

  /// Register a NIC for servicing. Installs the release/complete hooks
  /// (outstanding-op accounting and completion bookkeeping).
  void add_nic(CxiNic* nic);

  TriggeredStream& add_stream(TriggeredStream s);
  std::size_t stream_count() const { return streams_.size(); }
  TriggeredStream& stream_at(std::size_t i) { return *streams_[i]; }

  /// Synchronously arm the initial generations of every stream and write
  /// the readiness words, then schedule the first tick. Call after the
  /// device actors start: their pending resume events are what keeps the
  /// tick chain alive.
  void start();

  /// Queue one host-issued write for a fallback generation. Writes are
  /// paced per_op_overhead apiece through the rank's host write worker;
  /// the generation flips to FallbackDone when the planned count is out.
  void host_issue(TriggeredStream& s, std::uint64_t gen, std::function<void()> write);

  /// Raw paced host write (fallback barrier chain rounds).
  void host_write(RankId rank, std::function<void()> write);

  std::uint64_t ticks() const { return ticks_; }
  std::uint64_t serviced_total() const { return serviced_total_; }
  std::uint64_t gens_armed() const { return gens_armed_; }
  std::uint64_t fallbacks() const { return fallbacks_; }

 private:
  struct RegEntry {
    TriggeredStream* stream = nullptr;
    std::uint64_t gen = 0;
    std::uint64_t am_index = kNoAmIndex;
  };
  struct Worker {
    std::deque<std::function<void()>> queue;
    bool busy = false;
  };

  void tick();
  void after_service();
  void arm_pass();
  bool try_arm(TriggeredStream& s);
  void lag_pass();
  void engage_fallback(TriggeredStream& s);
  void start_barrier_chain(TriggeredStream& s, std::uint64_t gen);
  void on_record(CxiNic& nic, const CompletionRecord& rec);
  void maybe_reschedule();
  void worker_kick(RankId rank);
  bool paused_now() const {
    return cfg_.paused_from < cfg_.paused_until && engine_.now() >= cfg_.paused_from &&
           engine_.now() < cfg_.paused_until;
  }

  Engine& engine_;
  MemoryPool& memory_;
  Fabric& fabric_;
  CoordContext& ctx_;
  const Layout& layout_;
  MonitorConfig cfg_;
  HostCapability cap_;

  std::vector<CxiNic*> nics_;
  std::vector<std::unique_ptr<TriggeredStream>> streams_;
  std::map<std::pair<NicId, EntryId>, RegEntry> registry_;
  std::map<RankId, Worker> workers_;
  std::uint64_t pending_service_ = 0;  // completions landed, not yet retired
  std::uint64_t ticks_ = 0;
  std::uint64_t serviced_total_ = 0;
  std::uint64_t gens_armed_ = 0;
  std::uint64_t fallbacks_ = 0;
};

/// Triggered backend: device steps never create NIC work. A barrier, halo
/// exchange, or AM send waits for its generation's readiness word, then
/// rings the stream counter's doorbell to release entries the monitor
/// armed — or, when the slot's mode word says the host took the generation
/// over, skips the doorbells and lets the host writes flow.
class OfiBackend : public Backend {
 public:
  OfiBackend(Engine& engine, MemoryPool& memory, Fabric& fabric, CoordContext& ctx,
             const Layout& layout)
      : engine_(engine), memory_(memory), fabric_(fabric), ctx_(ctx), layout_(layout) {
    const std::size_t n = layout.ranks;
    nic_of_rank_.assign(n, nullptr);
    monitor_of_rank_.assign(n, nullptr);
    barrier_stream_.assign(n, nullptr);
    halo_stream_.assign(n, nullptr);
    am_stream_.assign(n, nullptr);
    am_plan_.assign(n, {});
    raw_counters_.assign(n, {});
  }

  void set_nic(RankId rank, CxiNic* nic) { nic_of_rank_[rank] = nic; }
  void set_monitor(RankId rank, HostMonitor* m) { monitor_of_rank_[rank] = m; }
  void set_barrier_stream(RankId rank, TriggeredStream* s) { barrier_stream_[rank] = s; }
  void set_halo_stream(RankId rank, TriggeredStream* s) { halo_stream_[rank] = s; }
  void set_am_stream(RankId rank, TriggeredStream* s) { am_stream_[rank] = s; }
  void set_am_plan(RankId rank, std::vector<PlannedSend> plan) {
    am_plan_[rank] = std::move(plan);
  }
  void set_raw_counters(RankId rank, std::vector<CounterId> counters) {
    raw_counters_[rank] = std::move(counters);
  }
  const std::vector<PlannedSend>& am_plan(RankId rank) const { return am_plan_[rank]; }

  bool gpu_initiated() const override { return false; }
  Status raw_trigger(DeviceActor& actor, std::uint32_t counter_ref,
                     std::uint64_t value) override;
  void barrier(DeviceActor& actor, std::uint64_t index, std::function<void()> done) override;
  Status am_send(DeviceActor& actor, const StepAmSend& step,
                 std::function<void()> done) override;
  Status ib_put(DeviceActor& actor, const StepIbPut& step, std::function<void()> done) override;
  Status halo_exchange(DeviceActor& actor, std::uint64_t iter,
                       std::function<void()> done) override;

 private:
  /// Write the stream's requested word, then run `proceed` once the
  /// readiness word reaches `epoch` (inline when already there).
  void with_ready(DeviceActor& actor, TriggeredStream& s, std::uint64_t epoch,
                  std::function<void()> proceed);

  Engine& engine_;
  MemoryPool& memory_;
  Fabric& fabric_;
  CoordContext& ctx_;
  const Layout& layout_;
  // Set for every rank that has streams; host-issued mode is only reachable
  // once that rank's monitor flipped the slot's mode word.
  std::vector<HostMonitor*> monitor_of_rank_;
  std::vector<CxiNic*> nic_of_rank_;
  std::vector<TriggeredStream*> barrier_stream_;
  std::vector<TriggeredStream*> halo_stream_;
  std::vector<TriggeredStream*> am_stream_;
  std::vector<std::vector<PlannedSend>> am_plan_;
  std::vector<std::vector<CounterId>> raw_counters_;
};

/// Arming plan for one barrier generation: R signal entries, thresholds
/// 1..R, each writing the epoch into the dissemination peer's round word.
std::vector<PlannedEntry> plan_barrier_gen(const Layout& layout, RankId rank, std::uint64_t gen);

/// Arming plan for one halo generation: two puts (threshold 1 to the left
/// neighbor, 2 to the right), each incrementing the receiver's arrival flag.
std::vector<PlannedEntry> plan_halo_gen(const Layout& layout, RankId rank);

}  // namespace trigsim
