// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgmoe/model_stats.hpp"
#include "pgmoe/strategy.hpp"

namespace pgmoe {

/// Bounded fast tier behind a linear bandwidth/latency channel.
struct TierSpec {
  std::string name = "custom";
  std::int64_t fast_capacity = 80'000'000'000;
  double bandwidth = 32e9;  // bytes/s, may be +inf
  double latency = 10e-6;   // seconds per issued transfer

  void validate() const;
};

/// "pcie4", "ssd", "infinite". Capacity defaults to 80 GB.
std::optional<TierSpec> tier_preset(const std::string& name);

/// latency + bytes / bandwidth. A batch of experts issued together is one
/// call with the summed bytes.
double transfer_duration(std::int64_t bytes, const TierSpec& tier);

enum class Residency { Fast, Slow, InFlight };

/// Where each parameter group lives. Group 0 is everything that is always
/// fast-resident (non-MoE + gates); group 1 + b*E + e is expert e of block b.
class PlacementState {
 public:
  struct Group {
    std::int64_t bytes = 0;
    Residency where = Residency::Slow;
    double inflight_start = 0;
    double inflight_end = 0;
  };

  PlacementState(const ModelFootprint& fp, std::int64_t fast_capacity);

  static constexpr int kResidentGroup = 0;
  int expert_group(int block, int expert) const { return 1 + block * num_experts_ + expert; }

  const Group& group(int id) const { return groups_.at(id); }
  std::size_t num_groups() const { return groups_.size(); }
  std::int64_t fast_bytes() const { return fast_bytes_; }
  std::int64_t fast_capacity() const { return capacity_; }

  /// Reserves fast-tier space from transfer start. Throws OutOfMemory.
  void begin_transfer(int id, double start, double end);
  void complete_transfer(int id);
  /// Slow -> Fast with no channel time (initial load).
  void pin(int id);
  void release(int id);
  /// Fixed fast-tier region not tied to a group (the expert cache).
  void reserve_region(std::int64_t bytes) { reserve(bytes, -1); }

 private:
  void reserve(std::int64_t bytes, int id);

  int num_experts_;
  std::int64_t capacity_;
  std::int64_t fast_bytes_ = 0;
  std::vector<Group> groups_;
};

/// Resident-only: every group fast. Offload strategies: only group 0 fast.
/// Throws OutOfMemory when that does not fit.
PlacementState initial_placement(const ModelFootprint& fp, Strategy strategy, const TierSpec& tier);

}  // namespace pgmoe
