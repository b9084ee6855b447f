// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/routing_trace.hpp"

#include <cmath>

#include "pgmoe/rng.hpp"

namespace pgmoe {

RoutingTrace gen_routing_trace(const ModelConfig& config, int iterations, double skew,
                               std::uint64_t seed) {
  config.validate();
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (!(skew >= 0.0) || !std::isfinite(skew)) throw ConfigError("skew must be finite and >= 0");

  const int e = config.num_experts, k = config.top_k;
  std::vector<double> weight(e);
  for (int i = 0; i < e; ++i) weight[i] = std::pow(static_cast<double>(i + 1), -skew);

  Xoshiro256 rng(seed);
  RoutingTrace trace;
  trace.num_blocks = config.num_blocks;
  trace.provenance = Provenance::Synthetic;
  trace.entries.reserve(static_cast<std::size_t>(iterations) * config.num_blocks);

  std::vector<char> taken(e);
  for (int it = 0; it < iterations; ++it) {
    for (int b = 0; b < config.num_blocks; ++b) {
      std::fill(taken.begin(), taken.end(), 0);
      RoutingDecision d;
      double remaining = 0;
      for (double w : weight) remaining += w;
      // Sequential draws without replacement over the renormalised remainder.
      for (int draw = 0; draw < k; ++draw) {
        const double target = rng.uniform() * remaining;
        double acc = 0;
        int pick = -1;
        for (int i = 0; i < e; ++i) {
          if (taken[i]) continue;
          pick = i;
          acc += weight[i];
          if (target < acc) break;
        }
        taken[pick] = 1;
        remaining -= weight[pick];
        d.expert_ids.push_back(pick);
        d.combine_weights.push_back(1.0 / k);
      }
      trace.entries.push_back(TraceEntry{std::move(d), -1});
    }
  }
  return trace;
}

}  // namespace pgmoe
