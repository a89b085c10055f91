// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "trigsim/engine.hpp"
#include "trigsim/error.hpp"
#include "trigsim/fabric.hpp"
#include "trigsim/memory.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

struct NicParams {
  std::uint32_t dwq_capacity = 256;
  std::uint64_t counter_max = 2047;
  SimTime doorbell_latency = 100;
  SimTime nic_exec_latency = 0;
  SimTime flush_cost = 1000000000;  // ~1 s: the expensive blocking reset
};

/// Token proving the caller runs host-side. Device step execution never
/// holds one, so the arming/progress paths are unreachable from device
/// programs by construction.
struct HostCapability {
  explicit HostCapability() = default;
};

// Deferred-op payloads. A put DMAs source bytes at NIC execution time; a
// signal write carries a host-composed 64-bit value (epoch-valued barrier
// signals); an am-write issues the body and then the sequence word as two
// ordered writes on the peer connection.
struct PutOp {
  RankId peer;
  MemAddr src;
  MemAddr dst;
  std::uint64_t size;
};
struct SignalOp {
  RankId peer;
  MemAddr dst;
  std::uint64_t value;
};
struct AmWriteOp {
  RankId peer;
  MemAddr body_dst;
  std::vector<std::uint8_t> body;
  MemAddr seq_dst;
  std::uint64_t seq;
  std::function<void()> on_body;  // body-delivery bookkeeping (AM log)
};
using NicOp = std::variant<PutOp, SignalOp, AmWriteOp>;

/// Completion side effects beyond the host CQ record: an optional
/// device-visible flag incremented at delivery (Fig-4-style signal flags).
struct WritebackSpec {
  std::optional<MemAddr> device_flag;
};

enum class EntryState : std::uint8_t { Armed, Released, Retired };

struct DeferredWorkEntry {
  EntryId id = 0;
  RankId owner = kNoRank;  // rank whose stream armed it
  CounterId trigger = 0;
  std::uint64_t threshold = 0;
  NicOp op;
  WritebackSpec writeback;
  EntryState state = EntryState::Armed;
  bool record_present = false;  // completion landed (host CQ record exists)
  bool record_consumed = false;
  SimTime released_at = 0;
  SimTime completed_at = 0;
};

struct CompletionRecord {
  EntryId entry = 0;
  SimTime completion_time = 0;
};

/// CXI-like NIC: trigger counters with a hard value bound, a bounded
/// deferred work queue shared by all ranks mapped to this NIC, threshold
/// release in threshold order, completion writebacks, and manual progress.
///
/// Resource accounting: each armed entry holds one DWQ slot and two counter
/// increments (trigger + completion) from the NIC-wide pool. Retiring an
/// entry returns both; without retirement the budget is only recoverable by
/// the blocking flush.
class CxiNic {
 public:
  CxiNic(NicId id, Engine& engine, MemoryPool& memory, Fabric& fabric, NicParams params)
      : id_(id), engine_(engine), memory_(memory), fabric_(fabric), params_(params) {}

  NicId id() const { return id_; }
  const NicParams& params() const { return params_; }

  CounterId alloc_counter();
  Result<std::uint64_t> counter_value(CounterId c) const;
  /// Host-side lifecycle reset (retire -> reset -> re-arm). Distinct from
  /// flush: costs nothing and touches one counter. Rejected while entries
  /// are still armed on the counter.
  Status counter_reset(const HostCapability&, CounterId c);

  /// Monotone absolute-value doorbell. Validated synchronously against the
  /// last issued value; the counter updates (and armed entries with
  /// threshold <= value release, in threshold order) after doorbell latency.
  Status doorbell_write(CounterId c, std::uint64_t value, RankId issuer);

  Result<EntryId> queue_work(const HostCapability&, RankId owner, CounterId trigger,
                             std::uint64_t threshold, NicOp op, WritebackSpec writeback);

  /// Manual progress: returns and consumes all pending completion records.
  std::vector<CompletionRecord> host_progress_poll(const HostCapability&);

  /// Frees the entry's DWQ slot and counter increments. Requires its record
  /// consumed: device-visible completion alone is not progress.
  Status retire(const HostCapability&, EntryId e);

  /// Remove a still-armed entry (fallback takeover). Returns its budget.
  Status cancel_armed(const HostCapability&, EntryId e);

  /// Blocking reset: after flush_cost, zeroes every counter and retires all
  /// entries whose completion has landed, consumed or not.
  void flush(const HostCapability&, std::function<void()> on_done);

  using EntryHook = std::function<void(const DeferredWorkEntry&)>;
  void set_release_hook(EntryHook h) { release_hook_ = std::move(h); }
  void set_complete_hook(EntryHook h) { complete_hook_ = std::move(h); }

  const DeferredWorkEntry* entry(EntryId e) const;

  // --- metrics ---
  std::uint32_t slots_in_use() const { return slots_in_use_; }
  std::uint32_t dwq_high_water() const { return dwq_high_water_; }
  std::uint64_t incr_outstanding() const { return incr_outstanding_; }
  std::uint64_t incr_high_water() const { return incr_high_water_; }
  std::uint64_t flush_count() const { return flush_count_; }
  std::uint64_t queued_total() const { return queued_total_; }
  std::uint64_t released_total() const { return released_total_; }
  std::uint64_t completed_total() const { return completed_total_; }
  std::uint64_t completion_increments() const { return completion_increments_; }
  std::uint64_t retired_total() const { return retired_total_; }
  std::uint32_t armed_now(RankId rank) const;
  std::uint32_t armed_high_water(RankId rank) const;

 private:
  struct Counter {
    std::uint64_t value = 0;
    std::uint64_t last_issued = 0;  // issue-order validation state
  };
  struct RankStats {
    std::uint32_t armed_now = 0;
    std::uint32_t high_water = 0;
  };

  void apply_doorbell(CounterId c, std::uint64_t value);
  void release_entry(EntryId e);
  void execute_released(EntryId e);
  void complete_entry(EntryId e);
  void free_budget(DeferredWorkEntry& ent);

  NicId id_;
  Engine& engine_;
  MemoryPool& memory_;
  Fabric& fabric_;
  NicParams params_;

  std::vector<Counter> counters_;
  std::map<EntryId, DeferredWorkEntry> entries_;  // armed + released live here
  std::map<CounterId, std::vector<EntryId>> armed_by_counter_;
  std::vector<CompletionRecord> unconsumed_records_;
  std::map<RankId, RankStats> rank_stats_;
  EntryId next_entry_ = 0;

  std::uint32_t slots_in_use_ = 0;
  std::uint32_t dwq_high_water_ = 0;
  std::uint64_t incr_outstanding_ = 0;
  std::uint64_t incr_high_water_ = 0;
  std::uint64_t flush_count_ = 0;
  std::uint64_t queued_total_ = 0;
  std::uint64_t released_total_ = 0;
  std::uint64_t completed_total_ = 0;
  std::uint64_t completion_increments_ = 0;
  std::uint64_t retired_total_ = 0;

  EntryHook release_hook_;
  EntryHook complete_hook_;
};

/// min(floor(capacity/R), floor(counter_max/(2R))) with R = ceil(log2 P):
/// how many whole barrier instances fit the NIC before a resource error.
Result<std::uint64_t> max_prestaged_barriers(std::uint64_t P, std::uint64_t dwq_capacity,
                                             std::uint64_t counter_max);

/// R = ceil(log2 P); 0 for P = 1.
std::uint32_t barrier_rounds(std::uint64_t P);

}  // namespace trigsim
