// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/tier.hpp"

#include <cmath>
#include <limits>

#include "pgmoe/errors.hpp"

namespace pgmoe {

void TierSpec::validate() const {
  if (!(bandwidth > 0)) throw ConfigError("tier bandwidth must be > 0");
  if (fast_capacity <= 0) throw ConfigError("tier fast capacity must be > 0");
  if (!(latency >= 0) || !std::isfinite(latency)) throw ConfigError("tier latency must be >= 0");
}

std::optional<TierSpec> tier_preset(const std::string& name) {
  if (name == "pcie4") return TierSpec{"pcie4", 80'000'000'000, 32e9, 10e-6};
  if (name == "ssd") return TierSpec{"ssd", 80'000'000'000, 3e9, 100e-6};
  if (name == "infinite")
    return TierSpec{"infinite", 80'000'000'000, std::numeric_limits<double>::infinity(), 0.0};
  return std::nullopt;
}

double transfer_duration(std::int64_t bytes, const TierSpec& tier) {
  return tier.latency + static_cast<double>(bytes) / tier.bandwidth;
}

PlacementState::PlacementState(const ModelFootprint& fp, std::int64_t fast_capacity)
    : num_experts_(fp.num_experts), capacity_(fast_capacity) {
  groups_.resize(1 + static_cast<std::size_t>(fp.num_blocks) * fp.num_experts);
  groups_[kResidentGroup].bytes = fp.resident_bytes;
  for (std::size_t i = 1; i < groups_.size(); ++i) groups_[i].bytes = fp.expert_bytes;
}

void PlacementState::reserve(std::int64_t bytes, int id) {
  if (fast_bytes_ + bytes > capacity_)
    throw OutOfMemory("fast tier needs " + std::to_string(fast_bytes_ + bytes) + " bytes, capacity " +
                      std::to_string(capacity_) + " (group " + std::to_string(id) + ")");
  fast_bytes_ += bytes;
}

void PlacementState::begin_transfer(int id, double start, double end) {
  Group& g = groups_.at(id);
  if (g.where != Residency::Slow) throw WiringError("transfer of a group that is not slow-resident");
  reserve(g.bytes, id);
  g.where = Residency::InFlight;
  g.inflight_start = start;
  g.inflight_end = end;
}

void PlacementState::complete_transfer(int id) {
  Group& g = groups_.at(id);
  if (g.where != Residency::InFlight) throw WiringError("completing a transfer that never began");
  g.where = Residency::Fast;
}

void PlacementState::pin(int id) {
  Group& g = groups_.at(id);
  if (g.where != Residency::Slow) return;
  reserve(g.bytes, id);
  g.where = Residency::Fast;
}

void PlacementState::release(int id) {
  if (id == kResidentGroup) throw WiringError("non-MoE parameters are never released");
  Group& g = groups_.at(id);
  if (g.where == Residency::Slow) throw WiringError("releasing a group that is not fast-resident");
  fast_bytes_ -= g.bytes;
  g.where = Residency::Slow;
}

PlacementState initial_placement(const ModelFootprint& fp, Strategy strategy, const TierSpec& tier) {
  tier.validate();
  PlacementState state(fp, tier.fast_capacity);
  if (strategy == Strategy::ResidentOnly) {
    if (fp.total_bytes > tier.fast_capacity)
      throw OutOfMemory("model needs " + std::to_string(fp.total_bytes) + " bytes, fast tier holds " +
                        std::to_string(tier.fast_capacity));
    for (std::size_t i = 0; i < state.num_groups(); ++i) state.pin(static_cast<int>(i));
  } else {
    state.pin(PlacementState::kResidentGroup);
  }
  return state;
}

}  // namespace pgmoe
