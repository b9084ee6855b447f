// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgmoe/model.hpp"

namespace pgmoe {

/// Closed-form parameter and FLOP counts. Gate parameters count as MoE
/// parameters; gate FLOPs are reported apart from flops_per_token, which
/// covers activated experts and dense compute only.
struct StatsReport {
  std::int64_t params_total = 0;
  std::int64_t params_moe = 0;
  std::int64_t params_non_moe = 0;
  std::int64_t params_experts = 0;
  std::int64_t params_gates = 0;
  std::int64_t flops_per_token = 0;
  std::int64_t gate_flops_per_token = 0;
};

StatsReport model_stats(const ModelConfig& config);

/// Sizes and per-op FLOPs the scheduler charges, derived from one config.
struct ModelFootprint {
  int num_blocks = 0;
  int num_experts = 0;
  int top_k = 0;
  int activation_level = 0;
  std::int64_t expert_bytes = 0;    // one expert (W1 + W2)
  std::int64_t resident_bytes = 0;  // non-MoE + all gates, always fast-tier
  std::int64_t total_bytes = 0;
  double gate_flops = 0;            // one gate evaluation
  double expert_flops = 0;          // one expert, one token
  double dense_flops = 0;           // one block's dense layer
  double head_flops = 0;            // per-iteration output projection
};

ModelFootprint footprint(const ModelConfig& config);

/// Named configurations. `full` carries published dims and drives bytes and
/// time; `compute` shrinks d_model/d_ff by `scale` so the math stays cheap.
struct Preset {
  std::string name;
  ModelConfig full;
  int scale = 1;

  ModelConfig compute() const;
};

const std::vector<Preset>& presets();
std::optional<Preset> find_preset(const std::string& name);

}  // namespace pgmoe
