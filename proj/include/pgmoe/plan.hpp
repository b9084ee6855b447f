// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Strategy-specific task graph shared by the virtual-clock and wall-clock
// executors. Each lane executes its tasks in submission order.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgmoe/cost_model.hpp"
#include "pgmoe/expert_cache.hpp"
#include "pgmoe/model.hpp"
#include "pgmoe/scheduler.hpp"
#include "pgmoe/strategy.hpp"
#include "pgmoe/timeline.hpp"

namespace pgmoe {

enum class TaskKind { Head, Gate, PreGate, Transfer, Experts, Dense };

struct PlanTask {
  Lane lane = Lane::Compute;
  TaskKind kind = TaskKind::Head;
  double duration = 0;
  std::vector<int> deps;
  int iteration = 0;
  int block = -1;
  std::vector<int> alloc_on_start;   // placement groups reserved at start
  std::vector<int> complete_on_end;  // transfers landing
  std::vector<int> release_on_end;   // experts freed after execution
  std::string label() const;
};

struct Plan {
  std::vector<PlanTask> tasks;
  std::vector<int> head_task;   // per iteration
  std::vector<int> dense_task;  // iteration-major, one per block
  std::int64_t cache_region_bytes = 0;
  std::int64_t cache_hits = 0;
  std::int64_t cache_accesses = 0;
  bool cache_enabled = false;
};

Plan build_plan(const ModelFootprint& fp, Strategy strategy, const CostModel& cost,
                const RoutingTrace& trace, const std::optional<CacheConfig>& cache);

}  // namespace pgmoe
