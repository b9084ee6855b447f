// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace pgmoe {

enum class Strategy { ResidentOnly, FetchOnDemand, PrefetchAll, PreGated };

inline constexpr std::array<Strategy, 4> kAllStrategies{
    Strategy::ResidentOnly, Strategy::FetchOnDemand, Strategy::PrefetchAll, Strategy::PreGated};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ResidentOnly: return "resident_only";
    case Strategy::FetchOnDemand: return "on_demand";
    case Strategy::PrefetchAll: return "prefetch_all";
    case Strategy::PreGated: return "pre_gated";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies)
    if (to_string(s) == name) return s;
  if (name == "gpu_only") return Strategy::ResidentOnly;
  return std::nullopt;
}

inline bool offloads_experts(Strategy s) { return s != Strategy::ResidentOnly; }

}  // namespace pgmoe
