// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace trigsim {

/// Seeded random stream with hand-rolled bounded draws. mt19937_64 output is
/// specified bit-for-bit by the standard; the std::uniform_* distributions
/// are not, so we avoid them to keep runs reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, bound) via rejection of the biased tail. bound == 0
  /// returns 0.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % bound;
  }

  /// Uniform in [lo, hi] inclusive.
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  bool chance(std::uint32_t numer, std::uint32_t denom) {
    return below(denom) < numer;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace trigsim
