// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pgmoe {

/// Time-ordered fast-tier residency log with running total and peak.
class MemoryLedger {
 public:
  struct Event {
    double time = 0;
    std::int64_t delta = 0;  // > 0 allocate, < 0 release
    std::string label;
    std::int64_t after = 0;  // running total once applied
  };

  /// Events must arrive in non-decreasing time order.
  void apply(double time, std::int64_t delta, std::string label);

  std::int64_t current() const { return current_; }
  std::int64_t peak() const { return peak_; }
  const std::vector<Event>& events() const { return events_; }

 private:
  std::int64_t current_ = 0;
  std::int64_t peak_ = 0;
  std::vector<Event> events_;
};

/// Analytic pre-gated peak: always-resident bytes plus the largest sum of
/// active-expert bytes over two adjacent blocks (one block if there is only
/// one).
std::int64_t eq1_peak(std::int64_t non_moe_bytes, std::span<const std::int64_t> per_block_active);

}  // namespace pgmoe
