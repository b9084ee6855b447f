// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "pgmoe/model.hpp"

namespace pgmoe {

/// Zipf(skew) draws of top_k distinct experts per (iteration, block);
/// skew = 0 is uniform. Combine weights are 1/top_k.
RoutingTrace gen_routing_trace(const ModelConfig& config, int iterations, double skew,
                               std::uint64_t seed);

}  // namespace pgmoe
