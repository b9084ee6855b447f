// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/scheduler.hpp"

#include <algorithm>
#include <array>
#include <tuple>

#include "pgmoe/errors.hpp"
#include "pgmoe/plan.hpp"
#include "pgmoe/tier.hpp"

namespace pgmoe {

std::string PlanTask::label() const {
  switch (kind) {
    case TaskKind::Head: return "head";
    case TaskKind::Gate: return "gate";
    case TaskKind::PreGate: return "pre_gate";
    case TaskKind::Transfer: return "transfer";
    case TaskKind::Experts: return "experts";
    case TaskKind::Dense: return "non_moe";
  }
  return "?";
}

namespace {

class PlanBuilder {
 public:
  PlanBuilder(const ModelFootprint& fp, Strategy strategy, const CostModel& cost,
              const std::optional<CacheConfig>& cache)
      : fp_(fp), strategy_(strategy), cost_(cost), placement_(fp, 1) {
    const bool cacheable = strategy == Strategy::FetchOnDemand || strategy == Strategy::PreGated;
    if (cache && cacheable) {
      const std::int64_t all_experts =
          static_cast<std::int64_t>(fp.num_blocks) * fp.num_experts * fp.expert_bytes;
      cache_.emplace(ExpertCache::from_fraction(cache->policy, cache->fraction, all_experts));
      plan_.cache_enabled = true;
      plan_.cache_region_bytes = cache_->capacity();
    }
  }

  int add(PlanTask task) {
    plan_.tasks.push_back(std::move(task));
    return static_cast<int>(plan_.tasks.size()) - 1;
  }

  int compute(TaskKind kind, double duration, std::vector<int> deps, int it, int block) {
    PlanTask t;
    t.lane = Lane::Compute;
    t.kind = kind;
    t.duration = duration;
    t.deps = std::move(deps);
    t.iteration = it;
    t.block = block;
    return add(std::move(t));
  }

  /// Issues the fetch of `ids` for `block`, consulting the cache. Returns the
  /// transfer task (or -1 when nothing moves) and the groups to free after
  /// the block's experts run.
  std::pair<int, std::vector<int>> fetch(const std::vector<int>& ids, int block, int it, int dep) {
    std::vector<int> moved, transient;
    for (int id : ids) {
      const int group = placement_.expert_group(block, id);
      if (cache_) {
        const CacheAccess a = cache_->access(expert_key(block, id), fp_.expert_bytes, seq_++);
        if (a.hit) continue;
        moved.push_back(group);
        if (!a.inserted) transient.push_back(group);
      } else {
        moved.push_back(group);
        transient.push_back(group);
      }
    }
    if (moved.empty()) return {-1, {}};
    PlanTask t;
    t.lane = Lane::Transfer;
    t.kind = TaskKind::Transfer;
    t.duration = cost_.transfer_time(fp_, static_cast<int>(moved.size()));
    if (dep >= 0) t.deps = {dep};
    t.iteration = it;
    t.block = block;
    t.alloc_on_start = transient;
    t.complete_on_end = transient;
    return {add(std::move(t)), transient};
  }

  Plan build(const RoutingTrace& trace) {
    const int n = fp_.num_blocks;
    if (trace.num_blocks != n) throw WiringError("routing trace block count does not match the model");
    if (strategy_ == Strategy::PreGated && fp_.activation_level < 1)
      throw WiringError("pre_gated requires a model wired with pre-gates (activation_level >= 1)");

    const double g = cost_.gate_time(fp_);
    const double e = cost_.experts_time(fp_, fp_.top_k);
    const double dn = cost_.dense_time(fp_);
    const int level = fp_.activation_level;

    int last = -1;
    for (int it = 0; it < trace.iterations(); ++it) {
      const int head = compute(TaskKind::Head, cost_.head_time(fp_), deps_of(last), it, -1);
      plan_.head_task.push_back(head);
      last = head;

      // Pre-gated bookkeeping: the fetch each block waits on.
      std::vector<int> xfer(n, -1);
      std::vector<std::vector<int>> held(n);
      auto ids_of = [&](int b) -> const std::vector<int>& {
        const auto& ids = trace.at(it, b).decision.expert_ids;
        if (static_cast<int>(ids.size()) != fp_.top_k)
          throw WiringError("routing decision size differs from top_k");
        return ids;
      };

      if (strategy_ == Strategy::PrefetchAll) {
        // Block 0's full set has nothing to hide behind.
        auto [t, groups] = fetch_all(0, it, head);
        xfer[0] = t;
        held[0] = std::move(groups);
      }

      for (int b = 0; b < n; ++b) {
        int expert_deps_gate = -1;
        switch (strategy_) {
          case Strategy::ResidentOnly: {
            expert_deps_gate = compute(TaskKind::Gate, g, deps_of(last), it, b);
            break;
          }
          case Strategy::FetchOnDemand: {
            expert_deps_gate = compute(TaskKind::Gate, g, deps_of(last), it, b);
            auto [t, groups] = fetch(ids_of(b), b, it, expert_deps_gate);
            xfer[b] = t;
            held[b] = std::move(groups);
            break;
          }
          case Strategy::PrefetchAll: {
            expert_deps_gate = compute(TaskKind::Gate, g, deps_of(last), it, b);
            if (b + 1 < n) {
              // Starts no earlier than this block; the channel queue keeps
              // it behind block b's own set.
              auto [t, groups] = fetch_all(b + 1, it, last);
              xfer[b + 1] = t;
              held[b + 1] = std::move(groups);
            }
            break;
          }
          case Strategy::PreGated: {
            int cursor = last;
            if (b < level) {
              cursor = compute(TaskKind::Gate, g, deps_of(cursor), it, b);
              auto [t, groups] = fetch(ids_of(b), b, it, cursor);
              xfer[b] = t;
              held[b] = std::move(groups);
            }
            if (b + level < n) {
              cursor = compute(TaskKind::PreGate, g, deps_of(cursor), it, b);
              auto [t, groups] = fetch(ids_of(b + level), b + level, it, cursor);
              xfer[b + level] = t;
              held[b + level] = std::move(groups);
            }
            expert_deps_gate = cursor;
            break;
          }
        }

        std::vector<int> deps = deps_of(expert_deps_gate);
        if (xfer[b] >= 0) deps.push_back(xfer[b]);
        const int ex = compute(TaskKind::Experts, e, deps, it, b);
        plan_.tasks[ex].release_on_end = held[b];
        last = compute(TaskKind::Dense, dn, {ex}, it, b);
        plan_.dense_task.push_back(last);
      }
    }
    if (cache_) {
      plan_.cache_hits = cache_->hits();
      plan_.cache_accesses = cache_->accesses();
    }
    return std::move(plan_);
  }

 private:
  static std::vector<int> deps_of(int task) { return task >= 0 ? std::vector<int>{task} : std::vector<int>{}; }

  std::pair<int, std::vector<int>> fetch_all(int block, int it, int dep) {
    std::vector<int> groups;
    for (int i = 0; i < fp_.num_experts; ++i) groups.push_back(placement_.expert_group(block, i));
    PlanTask t;
    t.lane = Lane::Transfer;
    t.kind = TaskKind::Transfer;
    t.duration = cost_.transfer_time(fp_, fp_.num_experts);
    t.deps = deps_of(dep);
    t.iteration = it;
    t.block = block;
    t.alloc_on_start = groups;
    t.complete_on_end = groups;
    return {add(std::move(t)), groups};
  }

  const ModelFootprint& fp_;
  Strategy strategy_;
  const CostModel& cost_;
  PlacementState placement_;  // only for group numbering
  std::optional<ExpertCache> cache_;
  std::int64_t seq_ = 0;
  Plan plan_;
};

struct Move {
  double time;
  int order;  // release < alloc < complete at equal times
  int seq;
  int group;
  int task;
};

}  // namespace

Plan build_plan(const ModelFootprint& fp, Strategy strategy, const CostModel& cost,
                const RoutingTrace& trace, const std::optional<CacheConfig>& cache) {
  cost.validate();
  return PlanBuilder(fp, strategy, cost, cache).build(trace);
}

std::vector<Vector<Real>> make_inputs(const ModelConfig& config, std::uint64_t seed, int iterations) {
  std::vector<Vector<Real>> xs;
  for (int i = 0; i < iterations; ++i) xs.push_back(make_input<Real>(config, seed, i));
  return xs;
}

SimulationResult simulate(const Model& model, Strategy strategy, const CostModel& cost,
                          const SimulationOptions& options) {
  if (options.iterations < 1) throw ConfigError("iterations must be >= 1");
  const ModelFootprint fp = options.footprint.value_or(footprint(model.config));
  if (fp.num_blocks != model.config.num_blocks || fp.num_experts != model.config.num_experts ||
      fp.top_k != model.config.top_k || fp.activation_level != model.config.activation_level)
    throw ConfigError("footprint structure does not match the model");
  if (options.routing && options.routing->iterations() < options.iterations)
    throw ConfigError("synthetic routing trace is shorter than the run");

  SimulationResult result;
  result.resident_bytes = fp.resident_bytes;

  // Placement is checked before any work, so OOM surfaces first.
  PlacementState placement = initial_placement(fp, strategy, cost.tier);

  // Math: exactly the reference decoder, one call per iteration.
  result.trace.num_blocks = model.config.num_blocks;
  result.trace.provenance = options.routing ? Provenance::Synthetic : Provenance::Gate;
  for (int it = 0; it < options.iterations; ++it) {
    const Vector<Real> x = make_input<Real>(model.config, options.input_seed, it);
    std::vector<RoutingDecision> forced;
    if (options.routing)
      for (const auto& entry : options.routing->iteration(it)) forced.push_back(entry.decision);
    DecoderOutput<Real> out = decoder_iteration(x, model, forced);
    result.outputs.push_back(std::move(out.y));
    for (auto& entry : out.trace) result.trace.entries.push_back(std::move(entry));
  }
  for (int it = 0; it < options.iterations; ++it) {
    std::vector<std::int64_t> active;
    for (const auto& entry : result.trace.iteration(it))
      active.push_back(static_cast<std::int64_t>(entry.decision.expert_ids.size()) * fp.expert_bytes);
    result.active_bytes.push_back(std::move(active));
  }

  const Plan plan = build_plan(fp, strategy, cost, result.trace, options.cache);

  // Virtual clock: each lane runs its queue in order; a task starts once its
  // lane is free and its dependencies have finished.
  std::array<double, 2> lane_free{0.0, 0.0};
  std::vector<double> start(plan.tasks.size()), end(plan.tasks.size());
  for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
    const PlanTask& t = plan.tasks[i];
    double& free = lane_free[t.lane == Lane::Compute ? 0 : 1];
    double s = free;
    for (int d : t.deps) s = std::max(s, end[d]);
    start[i] = s;
    end[i] = s + t.duration;
    free = end[i];
    result.timeline.events.push_back(
        TimelineEvent{t.lane, t.label(), t.iteration, t.block, start[i], end[i]});
  }

  // Residency replay in virtual-time order.
  std::vector<Move> moves;
  int seq = 0;
  for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
    const PlanTask& t = plan.tasks[i];
    const int task = static_cast<int>(i);
    for (int g : t.alloc_on_start) moves.push_back({start[i], 1, seq++, g, task});
    for (int g : t.complete_on_end) moves.push_back({end[i], 2, seq++, g, task});
    for (int g : t.release_on_end) moves.push_back({end[i], 0, seq++, g, task});
  }
  std::sort(moves.begin(), moves.end(), [](const Move& a, const Move& b) {
    return std::tie(a.time, a.order, a.seq) < std::tie(b.time, b.order, b.seq);
  });

  result.ledger.apply(0.0, placement.fast_bytes(), "initial placement");
  if (plan.cache_region_bytes > 0) {
    placement.reserve_region(plan.cache_region_bytes);
    result.ledger.apply(0.0, plan.cache_region_bytes, "expert cache");
  }
  for (const Move& m : moves) {
    const std::int64_t bytes = placement.group(m.group).bytes;
    const std::string where = "b" + std::to_string(plan.tasks[m.task].block) + " g" + std::to_string(m.group);
    switch (m.order) {
      case 1:
        placement.begin_transfer(m.group, start[m.task], end[m.task]);
        result.ledger.apply(m.time, bytes, "fetch " + where);
        break;
      case 2: placement.complete_transfer(m.group); break;
      case 0:
        placement.release(m.group);
        result.ledger.apply(m.time, -bytes, "release " + where);
        break;
    }
  }

  // Metrics.
  Metrics& mt = result.metrics;
  const int n = fp.num_blocks;
  double sum = 0;
  int count = 0;
  for (int it = 0; it < options.iterations; ++it) {
    double prev = end[plan.head_task[it]];
    for (int b = 0; b < n; ++b) {
      const double done = end[plan.dense_task[static_cast<std::size_t>(it) * n + b]];
      mt.block_latencies.push_back(done - prev);
      if (b > 0 || options.include_first_block || n == 1) {
        sum += done - prev;
        ++count;
      }
      prev = done;
    }
  }
  mt.avg_moe_block_latency = sum / count;
  mt.total_time = result.timeline.makespan();
  mt.tokens_per_sec = options.iterations / mt.total_time;
  mt.peak_fast_bytes = result.ledger.peak();
  if (plan.cache_enabled && plan.cache_accesses > 0)
    mt.cache_hit_rate = static_cast<double>(plan.cache_hits) / static_cast<double>(plan.cache_accesses);
  return result;
}

double steady_state_latency(Strategy strategy, const CostModel& cost, const ModelFootprint& fp) {
  const double g = cost.gate_time(fp);
  const double e = cost.experts_time(fp, fp.top_k);
  const double dn = cost.dense_time(fp);
  const double compute = g + e + dn;
  switch (strategy) {
    case Strategy::ResidentOnly: return compute;
    case Strategy::FetchOnDemand: return g + cost.transfer_time(fp, fp.top_k) + e + dn;
    case Strategy::PrefetchAll: return std::max(compute, cost.transfer_time(fp, fp.num_experts));
    case Strategy::PreGated: return std::max(compute, cost.transfer_time(fp, fp.top_k));
  }
  return 0;
}

std::pair<int, int> steady_state_blocks(Strategy strategy, const CostModel& cost, const ModelFootprint& fp) {
  const int n = fp.num_blocks;
  switch (strategy) {
    case Strategy::ResidentOnly:
    case Strategy::FetchOnDemand: return {0, n - 1};
    case Strategy::PrefetchAll: return {1, n - 1};
    case Strategy::PreGated: {
      // Blocks before L gate serially; the last L blocks have no pre-gate.
      const int level = std::max(1, fp.activation_level);
      if (level == 1) return {1, n - 2};
      // Deeper lookahead banks slack, so a transfer-bound pipeline only
      // approaches T_active per block once the channel backlog forms.
      const double compute = cost.gate_time(fp) + cost.experts_time(fp, fp.top_k) + cost.dense_time(fp);
      if (cost.transfer_time(fp, fp.top_k) > compute) return {0, -1};
      return {level, n - 1 - level};
    }
  }
  return {0, -1};
}

}  // namespace pgmoe
