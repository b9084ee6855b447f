// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pgmoe/scheduler.hpp"

namespace pgmoe {

struct WallclockOptions {
  /// Real seconds slept per virtual second.
  double time_scale = 1.0;
};

struct WallclockResult {
  std::vector<Vector<Real>> outputs;
  Metrics metrics;  // wall-clock seconds, divided back by time_scale
  double virtual_total = 0;
};

/// Tasks that ran after a cancellation was raised, per worker.
struct CancellationReport {
  int compute_tasks_after_cancel = 0;
  int transfer_tasks_after_cancel = 0;
};

/// Executes simulate()'s plan on two threads: a compute worker that also runs
/// the real block math, and a transfer worker. Each pulls its lane's tasks in
/// order and sleeps for the costed duration. An OOM raised by either worker
/// cancels the other before its next task and is rethrown here.
WallclockResult run_wallclock(const Model& model, Strategy strategy, const CostModel& cost,
                              const SimulationOptions& options, const WallclockOptions& wall = {},
                              CancellationReport* report = nullptr);

}  // namespace pgmoe
