// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/nic_cxi.hpp"

#include <algorithm>
#include <bit>

namespace trigsim {

CounterId CxiNic::alloc_counter() {
  counters_.push_back(Counter{});
  return static_cast<CounterId>(counters_.size() - 1);
}

Result<std::uint64_t> CxiNic::counter_value(CounterId c) const {
  if (c >= counters_.size()) return SimError::OutOfBounds;
  return counters_[c].value;
}

Status CxiNic::counter_reset(const HostCapability&, CounterId c) {
  if (c >= counters_.size()) return Status::Fail(SimError::OutOfBounds);
  auto it = armed_by_counter_.find(c);
  if (it != armed_by_counter_.end() && !it->second.empty())
    return Status::Fail(SimError::InvalidState);
  counters_[c].value = 0;
  counters_[c].last_issued = 0;
  return Status::Ok();
}

Status CxiNic::doorbell_write(CounterId c, std::uint64_t value, RankId issuer) {
  if (c >= counters_.size()) return Status::Fail(SimError::OutOfBounds);
  Counter& ctr = counters_[c];
  if (value > params_.counter_max) return Status::Fail(SimError::CounterOverflow);
  if (value < ctr.last_issued) return Status::Fail(SimError::NonMonotoneWrite);
  ctr.last_issued = value;
  engine_.schedule_in(
      params_.doorbell_latency, EventKind::DoorbellWrite,
      [this, c, value]() { apply_doorbell(c, value); }, issuer, c, value);
  return Status::Ok();
}

void CxiNic::apply_doorbell(CounterId c, std::uint64_t value) {
  Counter& ctr = counters_[c];
  if (value <= ctr.value) return;  // identity / stale no-op pass
  ctr.value = value;
  auto it = armed_by_counter_.find(c);
  if (it == armed_by_counter_.end()) return;
  std::vector<EntryId> ready;
  auto& armed = it->second;
  for (std::size_t i = 0; i < armed.size();) {
    if (entries_.at(armed[i]).threshold <= value) {
      ready.push_back(armed[i]);
      armed.erase(armed.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  // Threshold order, stable on ties (arm order = the host's intent).
  std::stable_sort(ready.begin(), ready.end(), [this](EntryId a, EntryId b) {
    return entries_.at(a).threshold < entries_.at(b).threshold;
  });
  for (EntryId e : ready) release_entry(e);
}

void CxiNic::release_entry(EntryId e) {
  DeferredWorkEntry& ent = entries_.at(e);
  ent.state = EntryState::Released;
  ent.released_at = engine_.now();
  ++released_total_;
  auto st = rank_stats_.find(ent.owner);
  if (st != rank_stats_.end() && st->second.armed_now > 0) --st->second.armed_now;
  if (release_hook_) release_hook_(ent);
  engine_.schedule_in(
      params_.nic_exec_latency, EventKind::NicExecute, [this, e]() { execute_released(e); },
      ent.owner, e, ent.threshold);
}

void CxiNic::execute_released(EntryId e) {
  DeferredWorkEntry& ent = entries_.at(e);
  Writeback wb;
  wb.device_flag = ent.writeback.device_flag;
  wb.on_complete = [this, e]() { complete_entry(e); };
  if (const PutOp* put = std::get_if<PutOp>(&ent.op)) {
    (void)fabric_.rdma_write(ent.owner, put->peer, put->src, put->dst, put->size, std::move(wb));
  } else if (const SignalOp* sig = std::get_if<SignalOp>(&ent.op)) {
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(sig->value >> (8 * i));
    (void)fabric_.rdma_write_imm(ent.owner, sig->peer, buf, sig->dst, std::move(wb));
  } else {
    // Body first, then the sequence word: same connection, so the receiver
    // can never observe the sequence before the body.
    const AmWriteOp& am = std::get<AmWriteOp>(ent.op);
    Writeback body_wb;
    body_wb.on_complete = am.on_body;
    (void)fabric_.rdma_write_imm(ent.owner, am.peer, am.body, am.body_dst, std::move(body_wb));
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(am.seq >> (8 * i));
    (void)fabric_.rdma_write_imm(ent.owner, am.peer, buf, am.seq_dst, std::move(wb));
  }
}

void CxiNic::complete_entry(EntryId e) {
  DeferredWorkEntry& ent = entries_.at(e);
  ent.record_present = true;
  ent.completed_at = engine_.now();
  unconsumed_records_.push_back(CompletionRecord{e, engine_.now()});
  ++completed_total_;
  ++completion_increments_;
  if (complete_hook_) complete_hook_(ent);
}

Result<EntryId> CxiNic::queue_work(const HostCapability&, RankId owner, CounterId trigger,
                                   std::uint64_t threshold, NicOp op, WritebackSpec writeback) {
  if (trigger >= counters_.size()) return SimError::OutOfBounds;
  if (threshold > params_.counter_max) return SimError::ThresholdOverflow;
  if (slots_in_use_ >= params_.dwq_capacity) return SimError::DwqFull;
  if (incr_outstanding_ + 2 > params_.counter_max) return SimError::CounterOverflow;

  EntryId id = next_entry_++;
  DeferredWorkEntry ent;
  ent.id = id;
  ent.owner = owner;
  ent.trigger = trigger;
  ent.threshold = threshold;
  ent.op = std::move(op);
  ent.writeback = writeback;
  entries_.emplace(id, std::move(ent));
  ++queued_total_;
  ++slots_in_use_;
  dwq_high_water_ = std::max(dwq_high_water_, slots_in_use_);
  incr_outstanding_ += 2;
  incr_high_water_ = std::max(incr_high_water_, incr_outstanding_);
  RankStats& st = rank_stats_[owner];
  ++st.armed_now;
  st.high_water = std::max(st.high_water, st.armed_now);

  if (counters_[trigger].value >= threshold) {
    release_entry(id);  // already satisfied: release now
  } else {
    armed_by_counter_[trigger].push_back(id);
  }
  return id;
}

std::vector<CompletionRecord> CxiNic::host_progress_poll(const HostCapability&) {
  std::vector<CompletionRecord> out;
  out.swap(unconsumed_records_);
  for (const CompletionRecord& rec : out) {
    auto it = entries_.find(rec.entry);
    if (it != entries_.end()) it->second.record_consumed = true;
  }
  return out;
}

void CxiNic::free_budget(DeferredWorkEntry& ent) {
  (void)ent;
  --slots_in_use_;
  incr_outstanding_ -= 2;
}

Status CxiNic::retire(const HostCapability&, EntryId e) {
  auto it = entries_.find(e);
  if (it == entries_.end()) return Status::Fail(SimError::InvalidState);
  DeferredWorkEntry& ent = it->second;
  if (ent.state != EntryState::Released || !ent.record_consumed)
    return Status::Fail(SimError::NotProgressedYet);
  free_budget(ent);
  ++retired_total_;
  entries_.erase(it);
  return Status::Ok();
}

Status CxiNic::cancel_armed(const HostCapability&, EntryId e) {
  auto it = entries_.find(e);
  if (it == entries_.end()) return Status::Fail(SimError::InvalidState);
  DeferredWorkEntry& ent = it->second;
  if (ent.state != EntryState::Armed) return Status::Fail(SimError::InvalidState);
  auto& armed = armed_by_counter_[ent.trigger];
  armed.erase(std::remove(armed.begin(), armed.end(), e), armed.end());
  auto st = rank_stats_.find(ent.owner);
  if (st != rank_stats_.end() && st->second.armed_now > 0) --st->second.armed_now;
  free_budget(ent);
  ++retired_total_;  // cancelled counts as retired for conservation
  entries_.erase(it);
  return Status::Ok();
}

void CxiNic::flush(const HostCapability&, std::function<void()> on_done) {
  ++flush_count_;
  engine_.schedule_in(
      params_.flush_cost, EventKind::FlushComplete,
      [this, on_done = std::move(on_done)]() {
        for (Counter& c : counters_) {
          c.value = 0;
          c.last_issued = 0;
        }
        for (auto it = entries_.begin(); it != entries_.end();) {
          if (it->second.state == EntryState::Released && it->second.record_present) {
            free_budget(it->second);
            ++retired_total_;
            it = entries_.erase(it);
          } else {
            ++it;
          }
        }
        unconsumed_records_.clear();
        if (on_done) on_done();
      },
      kNoRank, id_);
}

const DeferredWorkEntry* CxiNic::entry(EntryId e) const {
  auto it = entries_.find(e);
  return it == entries_.end() ? nullptr : &it->second;
}

std::uint32_t CxiNic::armed_now(RankId rank) const {
  auto it = rank_stats_.find(rank);
  return it == rank_stats_.end() ? 0 : it->second.armed_now;
}

std::uint32_t CxiNic::armed_high_water(RankId rank) const {
  auto it = rank_stats_.find(rank);
  return it == rank_stats_.end() ? 0 : it->second.high_water;
}

std::uint32_t barrier_rounds(std::uint64_t P) {
  if (P <= 1) return 0;
  return static_cast<std::uint32_t>(std::bit_width(P - 1));
}

Result<std::uint64_t> max_prestaged_barriers(std::uint64_t P, std::uint64_t dwq_capacity,
                                             std::uint64_t counter_max) {
  if (P < 2) return SimError::InvalidRankCount;
  const std::uint64_t R = barrier_rounds(P);
  return std::min(dwq_capacity / R, counter_max / (2 * R));
}

}  // namespace trigsim
