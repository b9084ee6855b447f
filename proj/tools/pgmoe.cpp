// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

// pgmoe run | stats | sweep
// Exit codes: 0 ok, 2 config error, 3 invariant failure, 4 every row OOM.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pgmoe/errors.hpp"
#include "pgmoe/experiment.hpp"
#include "pgmoe/kv_file.hpp"
#include "pgmoe/model_stats.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kInvariantFailure = 3;
constexpr int kAllOom = 4;

void print_report(const pgmoe::CsvReport& report) {
  std::printf("%-10s %-22s %-12s %16s %14s %16s\n", "model", "strategy", "sweep_value", "block_latency_s",
              "tokens_per_s", "peak_bytes");
  for (const auto& r : report.rows) {
    if (r.metrics)
      std::printf("%-10s %-22s %-12s %16.6e %14.4f %16lld\n", r.model.c_str(), r.strategy.c_str(),
                  r.sweep_value.c_str(), r.metrics->avg_moe_block_latency, r.metrics->tokens_per_sec,
                  static_cast<long long>(r.metrics->peak_fast_bytes));
    else
      std::printf("%-10s %-22s %-12s %16s %14s %16s\n", r.model.c_str(), r.strategy.c_str(),
                  r.sweep_value.c_str(), "OOM", "OOM", "OOM");
  }
}

int finish(const pgmoe::CsvReport& report, const std::string& out_dir) {
  pgmoe::write_csvs(report, out_dir);
  print_report(report);
  std::printf("wrote %s/{block_lats,throughputs,peak_mems}.csv\n", out_dir.c_str());
  return report.all_oom() ? kAllOom : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-gated MoE offloading simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool include_first = false, wallclock = false;
  double time_scale = 1.0;

  auto* run = app.add_subcommand("run", "Run every configured strategy and write the CSVs");
  run->add_option("--config", config_path, "experiment config (key=value)")->required();
  run->add_option("--out", out_dir, "output directory (overrides out_dir)");
  auto* seed_opt = run->add_option("--seed", seed, "seed (overrides the config)");
  run->add_flag("--include-first-block", include_first, "average block latency over block 0 too");
  run->add_flag("--wallclock", wallclock, "report wall-clock times from the threaded executor");
  run->add_option("--time-scale", time_scale, "real seconds per virtual second with --wallclock")
      ->check(CLI::PositiveNumber);

  std::string preset;
  auto* stats = app.add_subcommand("stats", "Print parameter and FLOP counts for a preset");
  stats->add_option("--preset", preset, "preset name")->required();

  std::string axis, values;
  auto* sw = app.add_subcommand("sweep", "Sweep one axis over a value list");
  sw->add_option("--axis", axis, "experts|top_k|cache_fraction|bandwidth|activation_level")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  sw->add_option("--config", config_path, "experiment config (key=value)")->required();
  sw->add_option("--out", out_dir, "output directory (overrides out_dir)");
  auto* sweep_seed = sw->add_option("--seed", seed, "seed (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*stats) {
      auto p = pgmoe::find_preset(preset);
      if (!p) throw pgmoe::ConfigError("unknown preset '" + preset + "'");
      const auto s = pgmoe::model_stats(p->full);
      const auto fp = pgmoe::footprint(p->full);
      const auto c = p->compute();
      std::printf("preset               %s\n", p->name.c_str());
      std::printf("d_model/d_ff         %d/%d (math at %d/%d, scale 1/%d)\n", p->full.d_model, p->full.d_ff,
                  c.d_model, c.d_ff, p->scale);
      std::printf("blocks/experts/top_k %d/%d/%d\n", p->full.num_blocks, p->full.num_experts, p->full.top_k);
      std::printf("params_total         %lld\n", static_cast<long long>(s.params_total));
      std::printf("params_moe           %lld\n", static_cast<long long>(s.params_moe));
      std::printf("params_non_moe       %lld\n", static_cast<long long>(s.params_non_moe));
      std::printf("params_experts       %lld\n", static_cast<long long>(s.params_experts));
      std::printf("params_gates         %lld\n", static_cast<long long>(s.params_gates));
      std::printf("flops_per_token      %lld\n", static_cast<long long>(s.flops_per_token));
      std::printf("gate_flops_per_token %lld\n", static_cast<long long>(s.gate_flops_per_token));
      std::printf("expert_bytes         %lld\n", static_cast<long long>(fp.expert_bytes));
      std::printf("total_bytes          %lld\n", static_cast<long long>(fp.total_bytes));
      return 0;
    }

    pgmoe::ExperimentConfig config = pgmoe::parse_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if ((*run && seed_opt->count() > 0) || (*sw && sweep_seed->count() > 0)) config.seed = seed;
    if (include_first) config.include_first_block = true;
    pgmoe::RunOptions options{wallclock, time_scale};

    if (*run) return finish(pgmoe::run_experiment(config, options), config.out_dir);

    auto parsed = pgmoe::parse_sweep_axis(axis);
    if (!parsed) throw pgmoe::ConfigError("unknown sweep axis '" + axis + "'");
    return finish(pgmoe::sweep(config, *parsed, pgmoe::split_list(values), options), config.out_dir);
  } catch (const pgmoe::InvariantError& e) {
    std::fprintf(stderr, "invariant failed: %s\n", e.what());
    return kInvariantFailure;
  } catch (const pgmoe::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const pgmoe::WiringError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
