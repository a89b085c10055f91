// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace trigsim {

/// Simulated time in integer nanoseconds. All latency parameters are exact
/// integers so equal-input runs are bit-for-bit reproducible.
using SimTime = std::uint64_t;

constexpr SimTime kUsec = 1000;
constexpr SimTime kMsec = 1000 * kUsec;
constexpr SimTime kSec = 1000 * kMsec;

using RankId = std::uint32_t;
using EventId = std::uint64_t;
using EntryId = std::uint64_t;
using CounterId = std::uint32_t;
using NicId = std::uint32_t;

constexpr RankId kNoRank = 0xffffffffu;

/// Comparison operators for flag waits (GE = greater or equal, etc.).
enum class CmpOp : std::uint8_t { EQ, NE, GT, GE, LT, LE };

constexpr bool cmp_eval(CmpOp op, std::uint64_t lhs, std::uint64_t rhs) {
  switch (op) {
    case CmpOp::EQ: return lhs == rhs;
    case CmpOp::NE: return lhs != rhs;
    case CmpOp::GT: return lhs > rhs;
    case CmpOp::GE: return lhs >= rhs;
    case CmpOp::LT: return lhs < rhs;
    case CmpOp::LE: return lhs <= rhs;
  }
  return false;
}

const char* to_string(CmpOp op);
bool cmp_from_string(const std::string& s, CmpOp& out);

/// Memory spaces a rank owns. Device actors may only poll device-visible
/// words; host actors may poll either.
enum class Space : std::uint8_t { Device, Host };

/// A location in some rank's registered memory.
struct MemAddr {
  RankId rank = kNoRank;
  Space space = Space::Device;
  std::uint64_t offset = 0;

  bool operator==(const MemAddr& other) const = default;
};

}  // namespace trigsim
