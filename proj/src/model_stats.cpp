// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/model_stats.hpp"

#include <algorithm>

namespace pgmoe {

StatsReport model_stats(const ModelConfig& config) {
  config.validate();
  const std::int64_t d = config.d_model, f = config.d_ff, e = config.num_experts;
  const std::int64_t n = config.num_blocks, k = config.top_k;

  StatsReport s;
  s.params_experts = n * e * 2 * d * f;
  // L conventional gates + (n - L) pre-gates = n gate matrices at any level.
  s.params_gates = n * d * e;
  s.params_moe = s.params_experts + s.params_gates;
  s.params_non_moe = n * d * d + config.remainder_params;
  s.params_total = s.params_moe + s.params_non_moe;
  s.flops_per_token = n * k * 4 * d * f + n * 2 * d * d + 2 * d * config.vocab_size;
  s.gate_flops_per_token = n * 2 * d * e;
  return s;
}

ModelFootprint footprint(const ModelConfig& config) {
  const StatsReport s = model_stats(config);
  const std::int64_t d = config.d_model, f = config.d_ff;
  ModelFootprint fp;
  fp.num_blocks = config.num_blocks;
  fp.num_experts = config.num_experts;
  fp.top_k = config.top_k;
  fp.activation_level = config.activation_level;
  fp.expert_bytes = 2 * d * f * config.dtype_bytes;
  fp.resident_bytes = (s.params_non_moe + s.params_gates) * config.dtype_bytes;
  fp.total_bytes = s.params_total * config.dtype_bytes;
  fp.gate_flops = 2.0 * static_cast<double>(d) * config.num_experts;
  fp.expert_flops = 4.0 * static_cast<double>(d) * static_cast<double>(f);
  fp.dense_flops = 2.0 * static_cast<double>(d) * static_cast<double>(d);
  fp.head_flops = 2.0 * static_cast<double>(d) * config.vocab_size;
  return fp;
}

ModelConfig Preset::compute() const {
  ModelConfig c = full;
  c.d_model = std::max(1, full.d_model / scale);
  c.d_ff = std::max(1, full.d_ff / scale);
  return c;
}

namespace {

// Switch-Base / Switch-Large dims with T5 vocab. The remainder approximates
// the dense T5 counterpart (embeddings, attention and the non-MoE FFNs).
Preset make(std::string name, int d, int f, int blocks, int experts, std::int64_t remainder) {
  ModelConfig c;
  c.d_model = d;
  c.d_ff = f;
  c.num_blocks = blocks;
  c.num_experts = experts;
  c.top_k = 1;
  c.activation_level = 1;
  c.dtype_bytes = 4;
  c.remainder_params = remainder;
  c.vocab_size = 32128;
  return Preset{std::move(name), c, 64};
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      make("base8", 768, 3072, 12, 8, 220'000'000),
      make("base64", 768, 3072, 12, 64, 220'000'000),
      make("base128", 768, 3072, 12, 128, 220'000'000),
      make("base256", 768, 3072, 12, 256, 220'000'000),
      make("large128", 1024, 4096, 24, 128, 745'000'000),
  };
  return all;
}

std::optional<Preset> find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  return std::nullopt;
}

}  // namespace pgmoe
