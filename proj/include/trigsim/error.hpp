// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cstdint>
#include <utility>
#include <variant>

namespace trigsim {

/// Modeled failure conditions. Resource errors (DwqFull, CounterOverflow,
/// MailboxFull, ...) are expected simulation outcomes that scenario logic
/// reacts to; contract errors (PastTime, OutOfBounds, NotOwner) fault the
/// issuing actor and fail the scenario.
enum class SimError : std::uint8_t {
  None = 0,
  PastTime,
  OutOfBounds,
  DwqFull,
  ThresholdOverflow,
  CounterOverflow,
  NonMonotoneWrite,
  NotProgressedYet,
  HandoffViolation,
  MailboxFull,
  SendQueueFull,
  NotOwner,
  InvalidRankCount,
  InvalidState,
};

const char* to_string(SimError err);

/// Status of an operation with no payload.
struct Status {
  SimError err = SimError::None;

  bool ok() const { return err == SimError::None; }
  static Status Ok() { return Status{}; }
  static Status Fail(SimError e) { return Status{e}; }
};

/// Value-or-error result for modeled operations.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}          // NOLINT(google-explicit-constructor)
  Result(SimError err) : v_(err) { assert(err != SimError::None); }  // NOLINT

  bool ok() const { return std::holds_alternative<T>(v_); }
  SimError error() const { return ok() ? SimError::None : std::get<SimError>(v_); }
  const T& value() const {
    assert(ok());
    return std::get<T>(v_);
  }
  T& value() {
    assert(ok());
    return std::get<T>(v_);
  }

 private:
  std::variant<T, SimError> v_;
};

}  // namespace trigsim
