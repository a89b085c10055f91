// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "trigsim/error.hpp"
#include "trigsim/types.hpp"

namespace trigsim {

/// A registered slice of a rank's memory. All NIC reads/writes must fall
/// inside a registered region of the right space.
struct MemoryRegion {
  RankId owner_rank = kNoRank;
  Space space = Space::Device;
  std::uint64_t base = 0;
  std::uint64_t length = 0;

  bool contains(std::uint64_t offset, std::uint64_t len) const {
    return offset >= base && len <= length && offset - base <= length - len;
  }
};

/// Backing store for every rank's device- and host-visible memory, plus the
/// watcher registry that makes flag waits event-driven: any write covering a
/// watched 8-byte word re-evaluates its predicates and fires the wake
/// callbacks of the satisfied ones (all of them — one write can wake several
/// parked actors).
class MemoryPool {
 public:
  void add_rank(std::uint64_t device_bytes, std::uint64_t host_bytes);
  std::size_t rank_count() const { return ranks_.size(); }

  /// Register a region inside an existing rank space. Regions may not
  /// extend past the allocated space.
  Result<MemoryRegion> register_region(RankId rank, Space space, std::uint64_t base,
                                       std::uint64_t length);

  Status write(const MemAddr& addr, std::span<const std::uint8_t> bytes);
  Status read(const MemAddr& addr, std::span<std::uint8_t> out) const;

  /// Bounds-only probe: does `[addr, addr+len)` fit the rank's space?
  Status check_range(const MemAddr& addr, std::uint64_t len) const;

  // 64-bit little-endian word helpers; flags and sequence numbers are words.
  Status write_u64(const MemAddr& addr, std::uint64_t value);
  Result<std::uint64_t> read_u64(const MemAddr& addr) const;

  /// Add `delta` to the word at `addr` (completion writeback flags are
  /// increment-style). Returns the new value.
  Result<std::uint64_t> fetch_add_u64(const MemAddr& addr, std::uint64_t delta);

  using WakeFn = std::function<void()>;

  /// Park on a word until `cmp(word, value)` holds. If it already holds the
  /// callback fires via `immediate` (caller schedules it); otherwise the
  /// watcher stays registered until satisfied. Returns true when already
  /// satisfied.
  Result<bool> watch_u64(const MemAddr& addr, CmpOp cmp, std::uint64_t value, WakeFn wake);

  std::uint64_t space_size(RankId rank, Space space) const;

 private:
  struct RankMem {
    std::vector<std::uint8_t> device;
    std::vector<std::uint8_t> host;
  };
  struct Watcher {
    CmpOp cmp;
    std::uint64_t value;
    WakeFn wake;
  };
  struct WordKey {
    RankId rank;
    Space space;
    std::uint64_t word_offset;
    bool operator<(const WordKey& o) const {
      if (rank != o.rank) return rank < o.rank;
      if (space != o.space) return space < o.space;
      return word_offset < o.word_offset;
    }
  };

  std::vector<std::uint8_t>& bytes_for(RankId rank, Space space);
  const std::vector<std::uint8_t>& bytes_for(RankId rank, Space space) const;
  bool in_bounds(const MemAddr& addr, std::uint64_t len) const;
  void notify_range(const MemAddr& addr, std::uint64_t len);

  std::vector<RankMem> ranks_;
  std::map<WordKey, std::vector<Watcher>> watchers_;
};

}  // namespace trigsim
