// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pgmoe/cost_model.hpp"
#include "pgmoe/expert_cache.hpp"
#include "pgmoe/memory_ledger.hpp"
#include "pgmoe/model.hpp"
#include "pgmoe/model_stats.hpp"
#include "pgmoe/strategy.hpp"
#include "pgmoe/timeline.hpp"

namespace pgmoe {

using Real = double;
using Model = ModelParams<Real>;

struct CacheConfig {
  CachePolicy policy = CachePolicy::LRU;
  double fraction = 0.0;  // of all expert bytes
};

struct SimulationOptions {
  int iterations = 1;
  std::uint64_t input_seed = 0;
  /// Sizes used for bytes and time. Defaults to footprint(model.config).
  std::optional<ModelFootprint> footprint;
  /// Applies to FetchOnDemand and PreGated only.
  std::optional<CacheConfig> cache;
  /// Synthetic routing used instead of the gates, for both math and timing.
  const RoutingTrace* routing = nullptr;
  bool include_first_block = false;
};

struct Metrics {
  double avg_moe_block_latency = 0;
  double tokens_per_sec = 0;
  std::int64_t peak_fast_bytes = 0;
  double total_time = 0;
  std::vector<double> block_latencies;  // iteration-major
  std::optional<double> cache_hit_rate;
};

struct SimulationResult {
  std::vector<Vector<Real>> outputs;
  RoutingTrace trace;
  Timeline timeline;
  Metrics metrics;
  MemoryLedger ledger;
  /// Active expert bytes per (iteration, block), the adjacent-pair peak inputs.
  std::vector<std::vector<std::int64_t>> active_bytes;
  std::int64_t resident_bytes = 0;
};

/// Runs `iterations` decoder iterations on the virtual clock. Numerical
/// outputs are exactly decoder_iteration's. Throws OutOfMemory on a capacity
/// violation and WiringError on an impossible strategy/model pairing.
SimulationResult simulate(const Model& model, Strategy strategy, const CostModel& cost,
                          const SimulationOptions& options);

/// Closed-form steady-state per-block latency with constant per-block cost:
///   resident:  g + e + n          on-demand: g + T_active + e + n
///   prefetch:  max(g + e + n, T_all)
///   pre-gated: max(g + e + n, T_active)
double steady_state_latency(Strategy strategy, const CostModel& cost, const ModelFootprint& fp);

/// Inclusive block range whose simulated latency equals the steady state:
/// all blocks for resident/on-demand, [1, n-1] for prefetch-all, [1, n-2] for
/// pre-gated at L = 1. At L >= 2 pre-gated is exact on [L, n-1-L] when
/// compute-bound and has no exact range when transfer-bound. Empty ranges
/// come back as first > second.
std::pair<int, int> steady_state_blocks(Strategy strategy, const CostModel& cost, const ModelFootprint& fp);

/// Inputs fed to iteration i: make_input(config, seed, i).
std::vector<Vector<Real>> make_inputs(const ModelConfig& config, std::uint64_t seed, int iterations);

}  // namespace pgmoe
