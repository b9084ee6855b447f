// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "pgmoe/model_stats.hpp"
#include "pgmoe/tier.hpp"

namespace pgmoe {

/// Declared hardware: every compute op costs flops / rate; the channel is
/// the tier's linear model. Rates are effective (memory-bound batch-1)
/// throughputs, not peak FLOP/s.
struct CostModel {
  double gate_flops_rate = 0;
  double expert_flops_rate = 0;
  double non_moe_flops_rate = 0;
  double head_flops_rate = 0;
  TierSpec tier;

  void validate() const;

  double gate_time(const ModelFootprint& fp) const { return fp.gate_flops / gate_flops_rate; }
  double experts_time(const ModelFootprint& fp, int count) const {
    return count * fp.expert_flops / expert_flops_rate;
  }
  double dense_time(const ModelFootprint& fp) const { return fp.dense_flops / non_moe_flops_rate; }
  double head_time(const ModelFootprint& fp) const { return fp.head_flops / head_flops_rate; }
  double transfer_time(const ModelFootprint& fp, int experts) const {
    return transfer_duration(static_cast<std::int64_t>(experts) * fp.expert_bytes, tier);
  }
};

/// Reads the four `*_flops_rate` keys (all required) from a key=value file.
/// The tier is left at its default; callers pick a preset.
CostModel load_calibration(const std::string& path);

}  // namespace pgmoe
