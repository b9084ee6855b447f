// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "pgmoe/errors.hpp"
#include "pgmoe/memory_ledger.hpp"
#include "pgmoe/plan.hpp"
#include "pgmoe/routing_trace.hpp"
#include "pgmoe/scheduler.hpp"
#include "pgmoe/tier.hpp"
#include "pgmoe/wallclock.hpp"
#include "reference.hpp"

using namespace pgmoe;

namespace {

constexpr double kTol = 1e-9;

struct Setup {
  Model model;
  ModelFootprint fp;
  CostModel cost;
};

/// Unit rates so every duration is just the footprint's flop count.
CostModel unit_cost(double bandwidth, double latency = 0) {
  CostModel cm;
  cm.gate_flops_rate = cm.expert_flops_rate = cm.non_moe_flops_rate = cm.head_flops_rate = 1;
  cm.tier = TierSpec{"test", 1'000'000'000'000, bandwidth, latency};
  return cm;
}

/// compute/block = 10 ms (gate 0, experts 6, dense 4), one expert = 4 ms on
/// the channel, E = 16 so a full set is 64 ms.
Setup worked_example() {
  ModelConfig c;
  c.num_blocks = 3;
  c.num_experts = 16;
  c.top_k = 1;
  c.activation_level = 1;
  Setup s{init_model(c), footprint(c), unit_cost(1e9)};
  s.fp.gate_flops = 0;
  s.fp.expert_flops = 6e-3;
  s.fp.dense_flops = 4e-3;
  s.fp.head_flops = 0;
  s.fp.expert_bytes = 4'000'000;
  s.fp.total_bytes = s.fp.resident_bytes + 3 * 16 * s.fp.expert_bytes;
  return s;
}

SimulationResult run(const Setup& s, Strategy st, int iterations = 1, std::optional<CacheConfig> cache = {},
                     const RoutingTrace* routing = nullptr) {
  SimulationOptions o;
  o.iterations = iterations;
  o.footprint = s.fp;
  o.cache = cache;
  o.routing = routing;
  return simulate(s.model, st, s.cost, o);
}

Setup random_setup(Xoshiro256& rng, bool allow_deep_lookahead) {
  ModelConfig c;
  c.d_model = 1 + static_cast<int>(rng() % 16);
  c.d_ff = 1 + static_cast<int>(rng() % 16);
  c.num_blocks = 1 + static_cast<int>(rng() % 8);
  c.num_experts = 1 + static_cast<int>(rng() % 16);
  c.top_k = 1 + static_cast<int>(rng() % c.num_experts);
  const int max_level = allow_deep_lookahead ? c.num_blocks - 1 : std::min(1, c.num_blocks - 1);
  c.activation_level = max_level > 0 ? 1 + static_cast<int>(rng() % max_level) : 0;
  c.seed = rng();
  Setup s{init_model(c), footprint(c), unit_cost(std::pow(10.0, rng.uniform(6, 10)), rng.uniform(0, 1e-4))};
  s.fp.gate_flops = rng.uniform(1e-5, 1e-4);
  s.fp.expert_flops = rng.uniform(1e-4, 1e-3);
  s.fp.dense_flops = rng.uniform(1e-4, 1e-3);
  s.fp.head_flops = rng.uniform(0, 1e-3);
  s.fp.expert_bytes = 1000 + static_cast<std::int64_t>(rng() % 1'000'000);
  s.fp.total_bytes = s.fp.resident_bytes + std::int64_t{c.num_blocks} * c.num_experts * s.fp.expert_bytes;
  return s;
}

std::vector<Strategy> runnable(const Setup& s) {
  std::vector<Strategy> out{Strategy::ResidentOnly, Strategy::FetchOnDemand, Strategy::PrefetchAll};
  if (s.model.config.activation_level >= 1) out.push_back(Strategy::PreGated);
  return out;
}

void check_timeline(const Timeline& t) {
  std::map<int, std::vector<const TimelineEvent*>> lanes;
  for (const auto& e : t.events) {
    CHECK(e.start >= 0);
    CHECK(std::isfinite(e.end));
    CHECK(e.end >= e.start);
    lanes[static_cast<int>(e.lane)].push_back(&e);
  }
  for (auto& [lane, evs] : lanes) {
    std::sort(evs.begin(), evs.end(),
              [](auto* a, auto* b) { return std::tie(a->start, a->end) < std::tie(b->start, b->end); });
    for (std::size_t i = 1; i < evs.size(); ++i) CHECK(evs[i - 1]->end <= evs[i]->start);
  }
  for (const auto& ex : t.events) {
    if (ex.label != "experts") continue;
    for (const auto& tr : t.events)
      if (tr.lane == Lane::Transfer && tr.iteration == ex.iteration && tr.block == ex.block)
        CHECK(tr.end <= ex.start);
  }
}

}  // namespace

TEST_CASE("worked example: 3 blocks, 10 ms compute, 4 ms active, 64 ms full set") {
  const Setup s = worked_example();
  // Hand-scheduled:
  //   on-demand  each block 0 + 4 + 6 + 4                          = 3 x 14 = 42
  //   pre-gated  block 0: 4 (fetch) + 10; blocks 1, 2: max(10, 4) = 14 + 20 = 34
  //   prefetch   channel serial: fetch0 [0,64], fetch1 [64,128], fetch2 [128,192]
  //              block ends 74, 138, 202 = 64 exposed + 2 x max(10, 64) + 10
  CHECK(run(s, Strategy::FetchOnDemand).metrics.total_time == doctest::Approx(0.042).epsilon(1e-12));
  CHECK(run(s, Strategy::PreGated).metrics.total_time == doctest::Approx(0.034).epsilon(1e-12));
  const double prefetch = run(s, Strategy::PrefetchAll).metrics.total_time;
  CHECK(prefetch >= 0.138);
  CHECK(prefetch == doctest::Approx(0.202).epsilon(1e-12));
  CHECK(run(s, Strategy::ResidentOnly).metrics.total_time == doctest::Approx(0.030).epsilon(1e-12));

  const auto pg = run(s, Strategy::PreGated).metrics.block_latencies;
  CHECK(pg[0] == doctest::Approx(0.014));
  CHECK(pg[1] == doctest::Approx(0.010));
  CHECK(pg[2] == doctest::Approx(0.010));
}

TEST_CASE("steady-state closed form on the worked example") {
  const Setup s = worked_example();
  CHECK(steady_state_latency(Strategy::PreGated, s.cost, s.fp) == doctest::Approx(0.010));
  CHECK(steady_state_latency(Strategy::FetchOnDemand, s.cost, s.fp) == doctest::Approx(0.014));
  CHECK(steady_state_latency(Strategy::PrefetchAll, s.cost, s.fp) == doctest::Approx(0.064));
  CHECK(steady_state_latency(Strategy::ResidentOnly, s.cost, s.fp) == doctest::Approx(0.010));
}

TEST_CASE("simulated steady-state blocks equal the closed form over random configs") {
  Xoshiro256 rng(404);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Setup s = random_setup(rng, true);
    const int iterations = 1 + static_cast<int>(rng() % 3);
    for (Strategy st : runnable(s)) {
      const auto r = run(s, st, iterations);
      const double want = steady_state_latency(st, s.cost, s.fp);
      const auto [first, last] = steady_state_blocks(st, s.cost, s.fp);
      const int n = s.fp.num_blocks;
      for (int it = 0; it < iterations; ++it)
        for (int b = first; b <= last; ++b) {
          const double got = r.metrics.block_latencies[static_cast<std::size_t>(it) * n + b];
          if (std::abs(got - want) > kTol)
            FAIL_CHECK(to_string(st) << " n=" << n << " L=" << s.fp.activation_level << " block " << b
                                     << ": " << got << " vs " << want);
          ++checked;
        }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("deep lookahead converges to the transfer rate when transfer-bound") {
  for (int level : {2, 3}) {
    ModelConfig c;
    c.d_model = c.d_ff = 4;
    c.num_blocks = 60;
    c.num_experts = 8;
    c.activation_level = level;
    Setup s{init_model(c), footprint(c), unit_cost(1e9)};
    s.fp.gate_flops = 1e-4;
    s.fp.expert_flops = 5e-4;
    s.fp.dense_flops = 4e-4;
    s.fp.expert_bytes = 1'500'000;  // 1.5 ms vs 1 ms compute
    CHECK(steady_state_blocks(Strategy::PreGated, s.cost, s.fp).first > steady_state_blocks(Strategy::PreGated, s.cost, s.fp).second);
    const auto r = run(s, Strategy::PreGated);
    const double want = steady_state_latency(Strategy::PreGated, s.cost, s.fp);
    CHECK(want == doctest::Approx(1.5e-3));
    for (int b = level; b < 60 - level; ++b) CHECK(r.metrics.block_latencies[b] <= want + kTol);
    for (int b = 40; b < 60 - level; ++b) CHECK(r.metrics.block_latencies[b] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("outputs and routing are independent of strategy and bit-identical to the reference") {
  Xoshiro256 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const Setup s = random_setup(rng, true);
    const int iterations = 1 + static_cast<int>(rng() % 4);
    for (Strategy st : runnable(s)) {
      const auto r = run(s, st, iterations);
      for (int it = 0; it < iterations; ++it) {
        const auto want = ref::decoder(s.model, make_input<double>(s.model.config, 0, it));
        CHECK(ref::bit_equal(r.outputs[it], want.y));
        const auto got = r.trace.iteration(it);
        CHECK(std::vector<TraceEntry>(got.begin(), got.end()) == want.trace);
      }
    }
  }
}

TEST_CASE("timeline invariants hold for every strategy") {
  Xoshiro256 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Setup s = random_setup(rng, true);
    for (Strategy st : runnable(s)) check_timeline(run(s, st, 2).timeline);
  }
}

TEST_CASE("resident-only never uses the channel") {
  const Setup s = worked_example();
  for (const auto& e : run(s, Strategy::ResidentOnly, 2).timeline.events) CHECK(e.lane == Lane::Compute);
}

TEST_CASE("on-demand moves exactly the activated experts after its gate") {
  const Setup s = worked_example();
  const auto r = run(s, Strategy::FetchOnDemand);
  int transfers = 0;
  for (const auto& e : r.timeline.events)
    if (e.lane == Lane::Transfer) {
      ++transfers;
      CHECK(e.end - e.start == doctest::Approx(0.004));
    }
  CHECK(transfers == 3);
}

TEST_CASE("infinite bandwidth: every strategy takes resident-only's time") {
  Xoshiro256 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Setup s = random_setup(rng, true);
    s.cost.tier = *tier_preset("infinite");
    const double base = run(s, Strategy::ResidentOnly, 2).metrics.total_time;
    for (Strategy st : runnable(s)) {
      CHECK(run(s, st, 2).metrics.total_time == doctest::Approx(base).epsilon(1e-12));
      CHECK(steady_state_latency(st, s.cost, s.fp) ==
            doctest::Approx(steady_state_latency(Strategy::ResidentOnly, s.cost, s.fp)));
    }
  }
}

TEST_CASE("latency ordering at sparse activation") {
  ModelConfig c;
  c.num_blocks = 6;
  c.num_experts = 64;
  Setup s{init_model(c), footprint(c), unit_cost(1e9)};
  s.fp.gate_flops = 1e-5;
  s.fp.expert_flops = 5e-4;
  s.fp.dense_flops = 5e-4;
  for (std::int64_t bytes : {100'000, 1'000'000, 3'000'000}) {
    s.fp.expert_bytes = bytes;
    auto lat = [&](Strategy st) { return steady_state_latency(st, s.cost, s.fp); };
    CHECK(lat(Strategy::PreGated) < lat(Strategy::FetchOnDemand));
    CHECK(lat(Strategy::FetchOnDemand) < lat(Strategy::PrefetchAll));
    CHECK(lat(Strategy::ResidentOnly) <= lat(Strategy::PreGated));
    auto avg = [&](Strategy st) { return run(s, st).metrics.avg_moe_block_latency; };
    CHECK(avg(Strategy::PreGated) < avg(Strategy::FetchOnDemand));
    CHECK(avg(Strategy::FetchOnDemand) < avg(Strategy::PrefetchAll));
  }
}

TEST_CASE("prefetch-all minus pre-gated gap closes as top_k grows") {
  ModelConfig c;
  c.num_blocks = 4;
  c.num_experts = 64;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 64; ++k) {
    c.top_k = k;
    Setup s{init_model(c), footprint(c), unit_cost(32e9, 10e-6)};
    s.fp.gate_flops = 1e-5;
    s.fp.expert_flops = 3e-4;
    s.fp.dense_flops = 6e-4;
    const double gap = steady_state_latency(Strategy::PrefetchAll, s.cost, s.fp) -
                       steady_state_latency(Strategy::PreGated, s.cost, s.fp);
    CHECK(gap <= prev);
    prev = gap;
    if (k == 64) CHECK(gap == 0.0);
  }
}

TEST_CASE("peak memory ordering and the pre-gated surplus") {
  Xoshiro256 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    Setup s = random_setup(rng, false);
    if (s.fp.activation_level != 1 || s.fp.num_blocks < 2) continue;
    const auto od = run(s, Strategy::FetchOnDemand, 2);
    const auto pg = run(s, Strategy::PreGated, 2);
    const auto pf = run(s, Strategy::PrefetchAll, 2);
    const auto ro = run(s, Strategy::ResidentOnly, 2);
    CHECK(od.metrics.peak_fast_bytes <= pg.metrics.peak_fast_bytes);
    CHECK(pg.metrics.peak_fast_bytes <= pf.metrics.peak_fast_bytes);
    CHECK(pf.metrics.peak_fast_bytes <= ro.metrics.peak_fast_bytes);

    std::int64_t single = 0, pair = 0;
    for (const auto& a : pg.active_bytes)
      for (std::size_t b = 0; b < a.size(); ++b) {
        single = std::max(single, a[b]);
        if (b + 1 < a.size()) pair = std::max(pair, a[b] + a[b + 1]);
      }
    CHECK(pg.metrics.peak_fast_bytes - od.metrics.peak_fast_bytes == pair - single);
    CHECK(od.metrics.peak_fast_bytes == s.fp.resident_bytes + single);

    std::int64_t eq1 = 0;
    for (const auto& a : pg.active_bytes) eq1 = std::max(eq1, eq1_peak(s.fp.resident_bytes, a));
    CHECK(pg.ledger.peak() == eq1);
  }
}

TEST_CASE("top-1 pre-gated holds exactly one more expert than on-demand") {
  const Setup s = worked_example();
  CHECK(run(s, Strategy::PreGated).metrics.peak_fast_bytes -
            run(s, Strategy::FetchOnDemand).metrics.peak_fast_bytes ==
        s.fp.expert_bytes);
}

TEST_CASE("resident-only OOM surfaces before any work") {
  Setup s = worked_example();
  s.cost.tier.fast_capacity = s.fp.total_bytes - 1;
  CHECK_THROWS_AS(run(s, Strategy::ResidentOnly), OutOfMemory);
  CHECK_NOTHROW(run(s, Strategy::PreGated));
}

TEST_CASE("offload strategies OOM when the fetch window does not fit") {
  Setup s = worked_example();
  s.cost.tier.fast_capacity = s.fp.resident_bytes + s.fp.expert_bytes;
  CHECK_NOTHROW(run(s, Strategy::FetchOnDemand));
  CHECK_THROWS_AS(run(s, Strategy::PreGated), OutOfMemory);
  CHECK_THROWS_AS(run(s, Strategy::PrefetchAll), OutOfMemory);
}

TEST_CASE("pre-gated needs pre-gates") {
  ModelConfig c;
  c.activation_level = 0;
  Setup s{init_model(c), footprint(c), unit_cost(1e9)};
  CHECK_THROWS_AS(run(s, Strategy::PreGated), WiringError);
  CHECK_NOTHROW(run(s, Strategy::FetchOnDemand));
}

TEST_CASE("cache hits cost no channel time") {
  ModelConfig c;
  c.num_blocks = 4;
  c.num_experts = 4;
  Setup s{init_model(c), footprint(c), unit_cost(1e9)};
  s.fp.expert_bytes = 1'000'000;
  for (Strategy st : {Strategy::FetchOnDemand, Strategy::PreGated}) {
    const auto r = run(s, st, 6, CacheConfig{CachePolicy::LRU, 1.0});
    int transfers = 0;
    for (const auto& e : r.timeline.events) transfers += e.lane == Lane::Transfer;
    // Everything fits: each distinct (block, expert) crosses the channel once.
    std::set<std::pair<int, int>> distinct;
    for (int it = 0; it < 6; ++it)
      for (int b = 0; b < 4; ++b) distinct.insert({b, r.trace.at(it, b).decision.expert_ids[0]});
    CHECK(transfers == static_cast<int>(distinct.size()));
    REQUIRE(r.metrics.cache_hit_rate.has_value());
    CHECK(*r.metrics.cache_hit_rate == doctest::Approx(1.0 - transfers / 24.0));
    CHECK(ref::bit_equal(r.outputs[5], run(s, Strategy::ResidentOnly, 6).outputs[5]));
    check_timeline(r.timeline);
  }
}

TEST_CASE("cache region counts toward peak and is ignored by other strategies") {
  const Setup s = worked_example();
  const CacheConfig cc{CachePolicy::LFU, 0.25};
  const std::int64_t region = static_cast<std::int64_t>(0.25 * 3 * 16 * s.fp.expert_bytes);
  const auto r = run(s, Strategy::FetchOnDemand, 2, cc);
  CHECK(r.metrics.peak_fast_bytes >= s.fp.resident_bytes + region);
  CHECK(run(s, Strategy::PrefetchAll, 2, cc).metrics.peak_fast_bytes ==
        run(s, Strategy::PrefetchAll, 2).metrics.peak_fast_bytes);
  CHECK_FALSE(run(s, Strategy::PrefetchAll, 2, cc).metrics.cache_hit_rate.has_value());
}

TEST_CASE("cache gain on a Zipf trace favours on-demand") {
  for (const char* name : {"base64", "base128"}) {
    const Preset p = *find_preset(name);
    const ModelConfig compute = p.compute();
    CostModel cm = load_calibration(PGMOE_DEFAULT_CALIBRATION);
    Setup s{init_model(compute), footprint(p.full), cm};
    const auto trace = gen_routing_trace(compute, 8, 1.2, 4);
    for (CachePolicy pol : {CachePolicy::LIFO, CachePolicy::LFU, CachePolicy::LRU}) {
      auto tps = [&](Strategy st, std::optional<CacheConfig> cc) {
        return run(s, st, 8, cc, &trace).metrics.tokens_per_sec;
      };
      const CacheConfig cc{pol, 0.2};
      const double od = tps(Strategy::FetchOnDemand, cc) / tps(Strategy::FetchOnDemand, std::nullopt);
      const double pg = tps(Strategy::PreGated, cc) / tps(Strategy::PreGated, std::nullopt);
      CHECK(od >= pg);
      CHECK(od >= 1.0);
    }
  }
}

TEST_CASE("first-block flag changes only the average") {
  const Setup s = worked_example();
  SimulationOptions o;
  o.footprint = s.fp;
  const auto a = simulate(s.model, Strategy::PreGated, s.cost, o);
  o.include_first_block = true;
  const auto b = simulate(s.model, Strategy::PreGated, s.cost, o);
  CHECK(a.metrics.avg_moe_block_latency == doctest::Approx(0.010));
  CHECK(b.metrics.avg_moe_block_latency == doctest::Approx(0.034 / 3));
  CHECK(a.metrics.total_time == b.metrics.total_time);
  CHECK(a.metrics.tokens_per_sec == doctest::Approx(1 / 0.034));
}

TEST_CASE("simulate is deterministic and exports JSON lines") {
  const Setup s = worked_example();
  const auto a = run(s, Strategy::PreGated, 2), b = run(s, Strategy::PreGated, 2);
  std::ostringstream ja, jb;
  a.timeline.write_jsonl(ja);
  b.timeline.write_jsonl(jb);
  CHECK(ja.str() == jb.str());
  std::istringstream lines(ja.str());
  std::string first;
  std::getline(lines, first);
  CHECK(first.find("\"lane\":\"compute\"") != std::string::npos);
  CHECK(first.find("\"start_s\"") != std::string::npos);
  CHECK(first.find("\"end_s\"") != std::string::npos);
  CHECK(first.find("\"block\"") != std::string::npos);
}

TEST_CASE("synthetic routing drives both math and transfers") {
  ModelConfig c;
  c.num_blocks = 4;
  c.num_experts = 8;
  c.top_k = 2;
  Setup s{init_model(c), footprint(c), unit_cost(1e9)};
  const auto trace = gen_routing_trace(c, 3, 1.0, 2);
  const auto r = run(s, Strategy::PreGated, 3, std::nullopt, &trace);
  CHECK(r.trace.provenance == Provenance::Synthetic);
  for (int it = 0; it < 3; ++it) {
    std::vector<RoutingDecision> forced;
    for (const auto& e : trace.iteration(it)) forced.push_back(e.decision);
    CHECK(ref::bit_equal(r.outputs[it], ref::decoder(s.model, make_input<double>(c, 0, it), forced).y));
  }
  const auto short_trace = gen_routing_trace(c, 2, 1.0, 2);
  CHECK_THROWS_AS(run(s, Strategy::PreGated, 3, std::nullopt, &short_trace), ConfigError);
}

TEST_CASE("wall-clock outputs equal the virtual run") {
  Xoshiro256 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Setup s = random_setup(rng, true);
    s.fp.expert_flops = s.fp.dense_flops = s.fp.gate_flops = s.fp.head_flops = 1e-5;
    s.cost.tier.bandwidth = 1e12;
    for (Strategy st : runnable(s)) {
      SimulationOptions o;
      o.iterations = 2;
      o.footprint = s.fp;
      const auto v = simulate(s.model, st, s.cost, o);
      const auto w = run_wallclock(s.model, st, s.cost, o, WallclockOptions{0.01});
      REQUIRE(w.outputs.size() == 2);
      for (int i = 0; i < 2; ++i) CHECK(ref::bit_equal(w.outputs[i], v.outputs[i]));
      CHECK(w.virtual_total == doctest::Approx(v.metrics.total_time).epsilon(1e-12));
    }
  }
}

TEST_CASE("wall-clock total tracks virtual time with millisecond sleeps") {
  const Setup s = worked_example();
  SimulationOptions o;
  o.footprint = s.fp;
  for (Strategy st : {Strategy::FetchOnDemand, Strategy::PreGated, Strategy::PrefetchAll}) {
    const auto w = run_wallclock(s.model, st, s.cost, o);
    CHECK(w.metrics.total_time == doctest::Approx(w.virtual_total).epsilon(0.2));
  }
}

TEST_CASE("wall-clock OOM cancels the other worker within one task") {
  Setup s = worked_example();
  s.cost.tier.fast_capacity = s.fp.resident_bytes + s.fp.expert_bytes / 2;
  SimulationOptions o;
  o.footprint = s.fp;
  o.iterations = 3;
  for (Strategy st : {Strategy::FetchOnDemand, Strategy::PreGated, Strategy::PrefetchAll}) {
    CancellationReport rep;
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(run_wallclock(s.model, st, s.cost, o, {}, &rep), OutOfMemory);
    CHECK(rep.compute_tasks_after_cancel <= 1);
    CHECK(rep.transfer_tasks_after_cancel <= 1);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(100));
  }
  s.cost.tier.fast_capacity = s.fp.total_bytes - 1;
  CHECK_THROWS_AS(run_wallclock(s.model, Strategy::ResidentOnly, s.cost, o), OutOfMemory);
}
