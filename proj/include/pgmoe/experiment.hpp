// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "pgmoe/cost_model.hpp"
#include "pgmoe/expert_cache.hpp"
#include "pgmoe/model.hpp"
#include "pgmoe/scheduler.hpp"
#include "pgmoe/strategy.hpp"

namespace pgmoe {

enum class SweepAxis { Experts, TopK, CacheFraction, Bandwidth, ActivationLevel };

std::string to_string(SweepAxis axis);
std::optional<SweepAxis> parse_sweep_axis(const std::string& name);

/// Flat key=value experiment description. Defaults:
///   preset=base8 (full dims; math runs at full/scale), strategy=all four,
///   tier=pcie4, fast_capacity_gb=80, calibration=<repo>/config/calibration.cfg,
///   iterations=4, seed=0, out_dir=out, include_first_block=false,
///   no cache, no sweep, gate routing (skew= switches to synthetic Zipf).
struct ExperimentConfig {
  std::string model_name = "base8";
  ModelConfig model;  // full-size dims
  int scale = 64;     // compute dims = full / scale
  std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  CostModel cost;     // tier included
  std::optional<SweepAxis> sweep_axis;
  std::vector<std::string> sweep_values;
  std::vector<CachePolicy> cache_policies;
  std::optional<double> cache_fraction;
  int iterations = 4;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool include_first_block = false;
  std::optional<double> skew;

  void validate() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig parse_config(const std::string& path);

/// Applies one sweep value to a copy of `base`.
ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepAxis axis, const std::string& value);

struct CsvRow {
  std::string model;
  std::string strategy;  // "<strategy>" or "<strategy>/<policy>" with a cache
  std::string sweep_value;
  std::optional<Metrics> metrics;  // empty: OOM
};

struct CsvReport {
  std::vector<CsvRow> rows;
  bool all_oom() const;
};

struct RunOptions {
  bool wallclock = false;
  double wallclock_scale = 1.0;
};

/// Runs every strategy (and cache policy) at every sweep point, checking the
/// invariant suite on each simulation. Throws InvariantError on a failure.
CsvReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// run_experiment over `axis` x `values`, overriding the config's own sweep.
CsvReport sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                const RunOptions& options = {});

/// Writes block_lats.csv, throughputs.csv and peak_mems.csv into `dir`.
void write_csvs(const CsvReport& report, const std::string& dir);

/// Checks one simulation against the serial reference, the adjacent-pair
/// peak and the closed-form steady state. Throws InvariantError naming the property.
void check_invariants(const Model& model, Strategy strategy, const CostModel& cost,
                      const SimulationOptions& options, const SimulationResult& result);

}  // namespace pgmoe
