// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pgmoe/errors.hpp"
#include "pgmoe/kv_file.hpp"
#include "pgmoe/memory_ledger.hpp"
#include "pgmoe/model_stats.hpp"
#include "pgmoe/routing_trace.hpp"
#include "pgmoe/tier.hpp"
#include "pgmoe/wallclock.hpp"

#ifndef PGMOE_DEFAULT_CALIBRATION
#define PGMOE_DEFAULT_CALIBRATION "config/calibration.cfg"
#endif

namespace pgmoe {

namespace {

constexpr std::array<std::pair<SweepAxis, const char*>, 5> kAxisNames{{
    {SweepAxis::Experts, "experts"},
    {SweepAxis::TopK, "top_k"},
    {SweepAxis::CacheFraction, "cache_fraction"},
    {SweepAxis::Bandwidth, "bandwidth"},
    {SweepAxis::ActivationLevel, "activation_level"},
}};

int to_int(const KeyValue& kv) {
  const long long v = parse_int(kv);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError(kv.key + " out of range");
  return static_cast<int>(v);
}

int parse_int_value(const std::string& key, const std::string& value) { return to_int(KeyValue{key, value, 0}); }

double parse_double_value(const std::string& key, const std::string& value) {
  return parse_double(KeyValue{key, value, 0});
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

bool bit_equal(const Vector<Real>& a, const Vector<Real>& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(Real)) != 0) return false;
  return true;
}

}  // namespace

std::string to_string(SweepAxis axis) {
  for (const auto& [a, name] : kAxisNames)
    if (a == axis) return name;
  return "?";
}

std::optional<SweepAxis> parse_sweep_axis(const std::string& name) {
  for (const auto& [a, n] : kAxisNames)
    if (name == n) return a;
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (scale < 1) throw ConfigError("scale must be >= 1");
  if (strategies.empty()) throw ConfigError("strategy list is empty");
  cost.validate();
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (cache_fraction && (*cache_fraction < 0 || *cache_fraction > 1))
    throw ConfigError("cache_fraction must be in [0, 1]");
  if (skew && !(*skew >= 0)) throw ConfigError("skew must be >= 0");
  if (sweep_axis && sweep_values.empty()) throw ConfigError("sweep_axis set without sweep_values");
  if (!sweep_axis && !sweep_values.empty()) throw ConfigError("sweep_values set without sweep_axis");
  if (sweep_axis)
    for (const auto& v : sweep_values) apply_sweep_value(*this, *sweep_axis, v);
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  std::map<std::string, KeyValue> kv;
  for (KeyValue& item : parse_key_values(in, source)) kv.emplace(item.key, std::move(item));

  static const std::vector<std::string> known = {
      "preset", "d_model", "d_ff", "num_blocks", "experts", "top_k", "activation_level", "dtype_bytes",
      "remainder_params", "vocab_size", "scale", "strategy", "tier", "fast_capacity_gb", "bandwidth",
      "latency", "calibration", "gate_flops_rate", "expert_flops_rate", "non_moe_flops_rate",
      "head_flops_rate", "sweep_axis", "sweep_values", "cache_policy", "cache_fraction", "iterations",
      "seed", "out_dir", "include_first_block", "skew"};
  for (const auto& [key, item] : kv)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(source + ":" + std::to_string(item.line) + ": unknown key '" + key + "'");

  auto take = [&](const std::string& key) -> const KeyValue* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  ExperimentConfig c;
  const std::string preset = take("preset") ? take("preset")->value : "base8";
  if (preset == "custom") {
    c.model_name = "custom";
    c.model = ModelConfig{};
    c.scale = 1;
  } else {
    auto p = find_preset(preset);
    if (!p) throw ConfigError("unknown preset '" + preset + "'");
    c.model_name = p->name;
    c.model = p->full;
    c.scale = p->scale;
  }
  if (auto* v = take("d_model")) c.model.d_model = to_int(*v);
  if (auto* v = take("d_ff")) c.model.d_ff = to_int(*v);
  if (auto* v = take("num_blocks")) c.model.num_blocks = to_int(*v);
  if (auto* v = take("experts")) c.model.num_experts = to_int(*v);
  if (auto* v = take("top_k")) c.model.top_k = to_int(*v);
  if (auto* v = take("activation_level")) c.model.activation_level = to_int(*v);
  if (auto* v = take("dtype_bytes")) c.model.dtype_bytes = to_int(*v);
  if (auto* v = take("remainder_params")) c.model.remainder_params = parse_int(*v);
  if (auto* v = take("vocab_size")) c.model.vocab_size = parse_int(*v);
  if (auto* v = take("scale")) c.scale = to_int(*v);

  if (auto* v = take("strategy")) {
    c.strategies.clear();
    for (const auto& name : split_list(v->value)) {
      auto s = parse_strategy(name);
      if (!s) throw ConfigError("unknown strategy '" + name + "'");
      c.strategies.push_back(*s);
    }
  }

  std::string calibration = PGMOE_DEFAULT_CALIBRATION;
  if (auto* v = take("calibration")) {
    std::filesystem::path p(v->value);
    if (p.is_relative() && source.front() != '<') p = std::filesystem::path(source).parent_path() / p;
    calibration = p.string();
  }
  c.cost = load_calibration(calibration);
  if (auto* v = take("gate_flops_rate")) c.cost.gate_flops_rate = parse_double(*v);
  if (auto* v = take("expert_flops_rate")) c.cost.expert_flops_rate = parse_double(*v);
  if (auto* v = take("non_moe_flops_rate")) c.cost.non_moe_flops_rate = parse_double(*v);
  if (auto* v = take("head_flops_rate")) c.cost.head_flops_rate = parse_double(*v);

  if (auto* v = take("tier")) {
    auto t = tier_preset(v->value);
    if (!t) throw ConfigError("unknown tier '" + v->value + "'");
    c.cost.tier = *t;
  }
  if (auto* v = take("fast_capacity_gb"))
    c.cost.tier.fast_capacity = static_cast<std::int64_t>(std::llround(parse_double(*v) * 1e9));
  if (auto* v = take("bandwidth")) c.cost.tier.bandwidth = parse_double(*v);
  if (auto* v = take("latency")) c.cost.tier.latency = parse_double(*v);

  if (auto* v = take("sweep_axis")) {
    c.sweep_axis = parse_sweep_axis(v->value);
    if (!c.sweep_axis) throw ConfigError("unknown sweep_axis '" + v->value + "'");
  }
  if (auto* v = take("sweep_values")) c.sweep_values = split_list(v->value);

  if (auto* v = take("cache_policy")) {
    for (const auto& name : split_list(v->value)) {
      auto p = parse_cache_policy(name);
      if (!p) throw ConfigError("unknown cache_policy '" + name + "'");
      c.cache_policies.push_back(*p);
    }
  }
  if (auto* v = take("cache_fraction")) c.cache_fraction = parse_double(*v);
  if (c.cache_policies.empty() && (c.cache_fraction || c.sweep_axis == SweepAxis::CacheFraction))
    c.cache_policies.push_back(CachePolicy::LRU);

  if (auto* v = take("iterations")) c.iterations = to_int(*v);
  if (auto* v = take("seed")) {
    if (v->value.empty() || v->value[0] == '-') throw ConfigError("seed must be a non-negative integer");
    try {
      c.seed = std::stoull(v->value);
    } catch (const std::exception&) {
      throw ConfigError("malformed seed '" + v->value + "'");
    }
  }
  if (auto* v = take("out_dir")) c.out_dir = v->value;
  if (auto* v = take("include_first_block")) c.include_first_block = parse_bool(*v);
  if (auto* v = take("skew")) c.skew = parse_double(*v);

  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  return parse_config(in, path);
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepAxis axis, const std::string& value) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::Experts: c.model.num_experts = parse_int_value("experts", value); break;
    case SweepAxis::TopK: c.model.top_k = parse_int_value("top_k", value); break;
    case SweepAxis::ActivationLevel: c.model.activation_level = parse_int_value("activation_level", value); break;
    case SweepAxis::CacheFraction: {
      const double f = parse_double_value("cache_fraction", value);
      if (f < 0 || f > 1) throw ConfigError("cache_fraction sweep value out of [0, 1]: " + value);
      c.cache_fraction = f;
      break;
    }
    case SweepAxis::Bandwidth: {
      if (auto t = tier_preset(value)) {
        c.cost.tier.bandwidth = t->bandwidth;
        c.cost.tier.latency = t->latency;
        c.cost.tier.name = t->name;
      } else {
        c.cost.tier.bandwidth = parse_double_value("bandwidth", value);
      }
      break;
    }
  }
  c.model.validate();
  c.cost.validate();
  return c;
}

bool CsvReport::all_oom() const {
  if (rows.empty()) return false;
  for (const auto& r : rows)
    if (r.metrics) return false;
  return true;
}

void check_invariants(const Model& model, Strategy strategy, const CostModel& cost,
                      const SimulationOptions& options, const SimulationResult& result) {
  const std::string where = std::string(to_string(strategy));

  // Output equivalence against the serial reference.
  for (int it = 0; it < options.iterations; ++it) {
    std::vector<RoutingDecision> forced;
    if (options.routing)
      for (const auto& e : options.routing->iteration(it)) forced.push_back(e.decision);
    const auto ref = decoder_iteration(make_input<Real>(model.config, options.input_seed, it), model, forced);
    if (!bit_equal(ref.y, result.outputs.at(it)))
      throw InvariantError("output-equivalence", where + " output differs at iteration " + std::to_string(it));
    const auto got = result.trace.iteration(it);
    for (std::size_t b = 0; b < ref.trace.size(); ++b)
      if (!(got[b].decision == ref.trace[b].decision) || got[b].origin_block != ref.trace[b].origin_block)
        throw InvariantError("output-equivalence",
                             where + " routing differs at iteration " + std::to_string(it) + " block " +
                                 std::to_string(b));
  }

  const bool cached = options.cache && (strategy == Strategy::FetchOnDemand || strategy == Strategy::PreGated);

  // Ledger peak against the analytic adjacent-pair form.
  if (strategy == Strategy::PreGated && model.config.activation_level == 1 && !cached) {
    std::int64_t expected = 0;
    for (const auto& active : result.active_bytes)
      expected = std::max(expected, eq1_peak(result.resident_bytes, active));
    if (result.ledger.peak() != expected)
      throw InvariantError("ledger-vs-eq1", where + " peak " + std::to_string(result.ledger.peak()) +
                                                " != " + std::to_string(expected));
  }

  // Steady-state blocks against the closed form.
  if (!cached) {
    const ModelFootprint fp = options.footprint.value_or(footprint(model.config));
    const double expected = steady_state_latency(strategy, cost, fp);
    const auto [first, last] = steady_state_blocks(strategy, cost, fp);
    const int n = fp.num_blocks;
    for (int it = 0; it < options.iterations; ++it)
      for (int b = first; b <= last; ++b) {
        const double got = result.metrics.block_latencies.at(static_cast<std::size_t>(it) * n + b);
        if (std::abs(got - expected) > 1e-9)
          throw InvariantError("oracle-agreement", where + " block " + std::to_string(b) + " latency " +
                                                       format_double(got) + " != " + format_double(expected));
      }
  }
}

namespace {

void run_point(const ExperimentConfig& c, const std::string& sweep_value, const RunOptions& options,
               CsvReport& report) {
  ModelConfig compute = c.model;
  compute.d_model = std::max(1, c.model.d_model / c.scale);
  compute.d_ff = std::max(1, c.model.d_ff / c.scale);
  compute.seed = c.seed;
  const Model model = init_model<Real>(compute);

  std::optional<RoutingTrace> routing;
  if (c.skew) routing = gen_routing_trace(compute, c.iterations, *c.skew, c.seed);

  SimulationOptions base;
  base.iterations = c.iterations;
  base.input_seed = c.seed;
  base.footprint = footprint(c.model);
  base.routing = routing ? &*routing : nullptr;
  base.include_first_block = c.include_first_block;

  for (Strategy s : c.strategies) {
    const bool cacheable = s == Strategy::FetchOnDemand || s == Strategy::PreGated;
    std::vector<std::optional<CachePolicy>> policies;
    if (cacheable && c.cache_fraction && !c.cache_policies.empty())
      for (CachePolicy p : c.cache_policies) policies.emplace_back(p);
    else
      policies.emplace_back(std::nullopt);

    for (const auto& policy : policies) {
      SimulationOptions opts = base;
      std::string label(to_string(s));
      if (policy) {
        opts.cache = CacheConfig{*policy, *c.cache_fraction};
        label += "/" + to_string(*policy);
      }
      CsvRow row{c.model_name, label, sweep_value, std::nullopt};
      try {
        SimulationResult result = simulate(model, s, c.cost, opts);
        check_invariants(model, s, c.cost, opts, result);
        if (options.wallclock) {
          WallclockResult wall = run_wallclock(model, s, c.cost, opts, WallclockOptions{options.wallclock_scale});
          for (std::size_t i = 0; i < wall.outputs.size(); ++i)
            if (!bit_equal(wall.outputs[i], result.outputs[i]))
              throw InvariantError("output-equivalence", label + " wall-clock output differs");
          wall.metrics.peak_fast_bytes = result.metrics.peak_fast_bytes;
          wall.metrics.cache_hit_rate = result.metrics.cache_hit_rate;
          result.metrics = wall.metrics;
        }
        row.metrics = std::move(result.metrics);
      } catch (const OutOfMemory&) {
        // Literal OOM row.
      }
      report.rows.push_back(std::move(row));
    }
  }
}

}  // namespace

CsvReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (!config.cache_policies.empty() && !config.cache_fraction && config.sweep_axis != SweepAxis::CacheFraction)
    throw ConfigError("cache_policy requires cache_fraction or a cache_fraction sweep");
  CsvReport report;
  if (!config.sweep_axis) {
    run_point(config, "none", options, report);
    return report;
  }
  for (const auto& v : config.sweep_values)
    run_point(apply_sweep_value(config, *config.sweep_axis, v), v, options, report);
  return report;
}

CsvReport sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                const RunOptions& options) {
  ExperimentConfig c = config;
  c.sweep_axis = axis;
  c.sweep_values = values;
  if (axis == SweepAxis::CacheFraction && c.cache_policies.empty()) c.cache_policies.push_back(CachePolicy::LRU);
  return run_experiment(c, options);
}

void write_csvs(const CsvReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  struct Column {
    const char* file;
    const char* header;
    std::string (*value)(const Metrics&);
  };
  const Column columns[] = {
      {"block_lats.csv", "avg_block_latency_s", [](const Metrics& m) { return format_double(m.avg_moe_block_latency); }},
      {"throughputs.csv", "tokens_per_sec", [](const Metrics& m) { return format_double(m.tokens_per_sec); }},
      {"peak_mems.csv", "peak_bytes", [](const Metrics& m) { return std::to_string(m.peak_fast_bytes); }},
  };
  for (const Column& col : columns) {
    const auto path = std::filesystem::path(dir) / col.file;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << "model,strategy,sweep_value," << col.header << "\n";
    for (const CsvRow& r : report.rows)
      os << r.model << "," << r.strategy << "," << r.sweep_value << ","
         << (r.metrics ? col.value(*r.metrics) : std::string("OOM")) << "\n";
    if (!os) throw ConfigError("failed writing " + path.string());
  }
}

}  // namespace pgmoe
