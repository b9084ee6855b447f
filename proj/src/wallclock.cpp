// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/wallclock.hpp"

#include <array>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>

#include "pgmoe/errors.hpp"
#include "pgmoe/plan.hpp"
#include "pgmoe/tier.hpp"

namespace pgmoe {
namespace {

using Clock = std::chrono::steady_clock;

class Executor {
 public:
  Executor(const Model& model, const Plan& plan, const SimulationOptions& options,
           PlacementState placement, const WallclockOptions& wall)
      : model_(model),
        plan_(plan),
        options_(options),
        wall_(wall),
        placement_(std::move(placement)),
        done_(plan.tasks.size(), false),
        end_(plan.tasks.size(), 0.0) {
    for (std::size_t i = 0; i < plan.tasks.size(); ++i)
      (plan.tasks[i].lane == Lane::Compute ? compute_queue_ : transfer_queue_).push_back(static_cast<int>(i));
    if (plan.cache_region_bytes > 0) placement_.reserve_region(plan.cache_region_bytes);
  }

  void run() {
    origin_ = Clock::now();
    std::thread transfer([this] { worker(transfer_queue_, after_cancel_.transfer_tasks_after_cancel); });
    worker(compute_queue_, after_cancel_.compute_tasks_after_cancel);
    transfer.join();
    if (error_) std::rethrow_exception(error_);
  }

  std::vector<Vector<Real>> outputs;
  const std::vector<double>& end_times() const { return end_; }
  const CancellationReport& report() const { return after_cancel_; }

 private:
  double now() const { return std::chrono::duration<double>(Clock::now() - origin_).count() / wall_.time_scale; }

  void worker(const std::vector<int>& queue, int& after_cancel) {
    std::optional<DecoderStepper<Real>> stepper;
    std::vector<RoutingDecision> forced;
    for (int id : queue) {
      const PlanTask& t = plan_.tasks[id];
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] {
          if (cancelled_) return true;
          for (int d : t.deps)
            if (!done_[d]) return false;
          return true;
        });
        if (cancelled_) return;
        try {
          for (int g : t.alloc_on_start) placement_.begin_transfer(g, now(), now() + t.duration);
        } catch (...) {
          error_ = std::current_exception();
          cancelled_ = true;
          cv_.notify_all();
          return;
        }
      }

      std::this_thread::sleep_for(std::chrono::duration<double>(t.duration * wall_.time_scale));

      try {
        if (t.kind == TaskKind::Head) {
          forced.clear();
          if (options_.routing)
            for (const auto& e : options_.routing->iteration(t.iteration)) forced.push_back(e.decision);
          stepper.emplace(model_, make_input<Real>(model_.config, options_.input_seed, t.iteration), forced);
        } else if (t.kind == TaskKind::Dense) {
          stepper->step();
          if (stepper->done()) {
            DecoderOutput<Real> out = std::move(*stepper).finish();
            std::lock_guard lock(mu_);
            outputs.push_back(std::move(out.y));
          }
        }
      } catch (...) {
        std::lock_guard lock(mu_);
        error_ = std::current_exception();
        cancelled_ = true;
        cv_.notify_all();
        return;
      }

      std::lock_guard lock(mu_);
      if (cancelled_) ++after_cancel;
      for (int g : t.complete_on_end) placement_.complete_transfer(g);
      for (int g : t.release_on_end) placement_.release(g);
      done_[id] = true;
      end_[id] = now();
      cv_.notify_all();
    }
  }

  const Model& model_;
  const Plan& plan_;
  const SimulationOptions& options_;
  WallclockOptions wall_;
  PlacementState placement_;
  std::vector<int> compute_queue_, transfer_queue_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<bool> done_;
  std::vector<double> end_;
  bool cancelled_ = false;
  std::exception_ptr error_;
  CancellationReport after_cancel_;
  Clock::time_point origin_;
};

}  // namespace

WallclockResult run_wallclock(const Model& model, Strategy strategy, const CostModel& cost,
                              const SimulationOptions& options, const WallclockOptions& wall,
                              CancellationReport* report) {
  if (!(wall.time_scale > 0)) throw ConfigError("time_scale must be > 0");
  // Placement is checked first so an impossible run fails before any work.
  const ModelFootprint fp = options.footprint.value_or(footprint(model.config));
  PlacementState placement = initial_placement(fp, strategy, cost.tier);

  RoutingTrace trace;
  trace.num_blocks = model.config.num_blocks;
  for (int it = 0; it < options.iterations; ++it) {
    std::vector<RoutingDecision> forced;
    if (options.routing)
      for (const auto& e : options.routing->iteration(it)) forced.push_back(e.decision);
    auto out = decoder_iteration(make_input<Real>(model.config, options.input_seed, it), model, forced);
    for (auto& e : out.trace) trace.entries.push_back(std::move(e));
  }
  const Plan plan = build_plan(fp, strategy, cost, trace, options.cache);

  Executor exec(model, plan, options, std::move(placement), wall);
  try {
    exec.run();
  } catch (...) {
    if (report) *report = exec.report();
    throw;
  }
  if (report) *report = exec.report();

  WallclockResult result;
  result.outputs = std::move(exec.outputs);
  const auto& end = exec.end_times();
  Metrics& mt = result.metrics;
  const int n = model.config.num_blocks;
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
  for (double e : end) mt.total_time = std::max(mt.total_time, e);
  mt.tokens_per_sec = options.iterations / mt.total_time;

  // Reference virtual makespan from the same plan.
  std::array<double, 2> lane_free{0.0, 0.0};
  std::vector<double> vend(plan.tasks.size());
  for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
    const PlanTask& t = plan.tasks[i];
    double& free = lane_free[t.lane == Lane::Compute ? 0 : 1];
    double s = free;
    for (int d : t.deps) s = std::max(s, vend[d]);
    vend[i] = s + t.duration;
    free = vend[i];
    result.virtual_total = std::max(result.virtual_total, vend[i]);
  }
  return result;
}

}  // namespace pgmoe
