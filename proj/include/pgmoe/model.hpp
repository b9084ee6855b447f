// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Numerical semantics of a pre-gated MoE decoder iteration. Nothing here knows
// about memory tiers or time; the scheduler reuses these functions verbatim.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgmoe/errors.hpp"
#include "pgmoe/rng.hpp"

namespace pgmoe {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ModelConfig {
  int d_model = 8;
  int d_ff = 16;
  int num_blocks = 2;
  int num_experts = 4;
  int top_k = 1;
  /// How many blocks ahead a pre-gate selects for. 0 is conventional gating.
  int activation_level = 1;
  int dtype_bytes = 4;
  std::uint64_t seed = 0;
  /// Parameters outside the MoE blocks (embeddings, attention stacks, ...).
  /// Accounting only: never materialised as weights.
  std::int64_t remainder_params = 0;
  /// Output projection width; drives the per-iteration head compute.
  int vocab_size = 0;

  void validate() const {
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(d_model >= 1 && d_ff >= 1, "model dims must be >= 1");
    require(num_blocks >= 1, "num_blocks must be >= 1");
    require(num_experts >= 1, "num_experts must be >= 1");
    require(top_k >= 1 && top_k <= num_experts, "top_k must be in [1, num_experts]");
    require(activation_level >= 0 && activation_level < num_blocks,
            "activation_level must be in [0, num_blocks)");
    require(dtype_bytes >= 1, "dtype_bytes must be >= 1");
    require(remainder_params >= 0 && vocab_size >= 0, "accounting sizes must be >= 0");
  }

  /// Blocks [0, L) select their own experts (every block when L = 0).
  bool has_conventional_gate(int block) const {
    return activation_level == 0 || block < activation_level;
  }
  /// Blocks [0, n - L) carry a pre-gate for block + L.
  bool has_pre_gate(int block) const {
    return activation_level > 0 && block < num_blocks - activation_level;
  }
};

template <typename Scalar>
struct ExpertParams {
  Matrix<Scalar> w1;  // d_ff x d_model
  Matrix<Scalar> w2;  // d_model x d_ff
};

/// Gate matrices are stored router-style, E x d_model, so logits = gate * x
/// runs through the same column-major kernel as every other product.
template <typename Scalar>
struct BlockParams {
  int index = 0;
  int top_k = 1;
  std::optional<Matrix<Scalar>> gate;
  std::optional<Matrix<Scalar>> pre_gate;
  std::vector<ExpertParams<Scalar>> experts;
  Matrix<Scalar> dense;  // d_model x d_model stand-in for attention etc.
};

template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  std::vector<BlockParams<Scalar>> blocks;
};

struct RoutingDecision {
  std::vector<int> expert_ids;
  std::vector<double> combine_weights;

  bool operator==(const RoutingDecision&) const = default;
};

enum class Provenance { Gate, Synthetic };

struct TraceEntry {
  RoutingDecision decision;
  /// Block whose gate produced the decision; -1 for synthetic decisions.
  int origin_block = -1;

  bool operator==(const TraceEntry&) const = default;
};

/// Row-major over (iteration, block).
struct RoutingTrace {
  int num_blocks = 0;
  Provenance provenance = Provenance::Gate;
  std::vector<TraceEntry> entries;

  int iterations() const { return num_blocks == 0 ? 0 : static_cast<int>(entries.size()) / num_blocks; }
  const TraceEntry& at(int iteration, int block) const {
    return entries.at(static_cast<std::size_t>(iteration) * num_blocks + block);
  }
  std::span<const TraceEntry> iteration(int i) const {
    return std::span<const TraceEntry>(entries).subspan(static_cast<std::size_t>(i) * num_blocks,
                                                        num_blocks);
  }

  bool operator==(const RoutingTrace&) const = default;
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> random_matrix(Xoshiro256& rng, int rows, int cols) {
  Matrix<Scalar> m(rows, cols);
  // Column-major fill order; values are first rounded to float so that the
  // float32 weight file round-trips exactly for any Scalar.
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      m(r, c) = static_cast<Scalar>(static_cast<float>(rng.uniform(-0.1, 0.1)));
  return m;
}

}  // namespace detail

template <typename Scalar = double>
ModelParams<Scalar> init_model(const ModelConfig& config) {
  config.validate();
  Xoshiro256 rng(config.seed);
  const int d = config.d_model, f = config.d_ff, e = config.num_experts;

  ModelParams<Scalar> model{config, {}};
  model.blocks.reserve(config.num_blocks);
  for (int b = 0; b < config.num_blocks; ++b) {
    BlockParams<Scalar> block;
    block.index = b;
    block.top_k = config.top_k;
    if (config.has_conventional_gate(b)) block.gate = detail::random_matrix<Scalar>(rng, e, d);
    if (config.has_pre_gate(b)) block.pre_gate = detail::random_matrix<Scalar>(rng, e, d);
    block.experts.reserve(e);
    for (int i = 0; i < e; ++i) {
      ExpertParams<Scalar> ex;
      ex.w1 = detail::random_matrix<Scalar>(rng, f, d);
      ex.w2 = detail::random_matrix<Scalar>(rng, d, f);
      block.experts.push_back(std::move(ex));
    }
    block.dense = detail::random_matrix<Scalar>(rng, d, d);
    model.blocks.push_back(std::move(block));
  }
  return model;
}

/// Deterministic per-iteration token embedding in [-1, 1).
template <typename Scalar = double>
Vector<Scalar> make_input(const ModelConfig& config, std::uint64_t seed, int iteration) {
  Xoshiro256 rng(seed ^ (0x5851f42d4c957f2dULL * (static_cast<std::uint64_t>(iteration) + 1)));
  Vector<Scalar> x(config.d_model);
  for (int i = 0; i < config.d_model; ++i)
    x(i) = static_cast<Scalar>(static_cast<float>(rng.uniform(-1.0, 1.0)));
  return x;
}

/// Softmax over all E logits, then the k most probable experts. Ties go to
/// the lower expert id.
template <typename DerivedX, typename DerivedG>
RoutingDecision gate_forward(const Eigen::MatrixBase<DerivedX>& x,
                             const Eigen::MatrixBase<DerivedG>& gate, int k) {
  const int e = static_cast<int>(gate.rows());
  if (k < 1 || k > e) throw ConfigError("gate: k must be in [1, E]");
  if (gate.cols() != x.rows()) throw ConfigError("gate: shape mismatch");

  const Eigen::VectorXd logits = gate.lazyProduct(x).template cast<double>();
  if (!logits.allFinite()) throw NumericalError("numerical overflow in gate");

  // Scalar exp and a left-to-right sum keep the weights reproducible.
  const double peak = logits.maxCoeff();
  Eigen::VectorXd expd(e);
  double denom = 0;
  for (int i = 0; i < e; ++i) {
    expd(i) = std::exp(logits(i) - peak);
    denom += expd(i);
  }

  std::vector<int> order(e);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits(a) > logits(b); });

  RoutingDecision out;
  out.expert_ids.assign(order.begin(), order.begin() + k);
  for (int id : out.expert_ids) out.combine_weights.push_back(expd(id) / denom);
  return out;
}

/// W2 * relu(W1 * x).
template <typename Derived, typename Scalar = typename Derived::Scalar>
Vector<Scalar> expert_forward(const Eigen::MatrixBase<Derived>& x, const ExpertParams<Scalar>& expert) {
  if (expert.w1.cols() != x.rows() || expert.w2.cols() != expert.w1.rows() ||
      expert.w2.rows() != x.rows())
    throw ConfigError("expert: shape mismatch");
  const Vector<Scalar> hidden = expert.w1.lazyProduct(x).cwiseMax(Scalar(0));
  return expert.w2.lazyProduct(hidden);
}

/// Routing for block + L computed from this block's input alone. This is the
/// dry-run path: no expert is touched.
template <typename Derived, typename Scalar = typename Derived::Scalar>
std::optional<RoutingDecision> pre_gate_forward(const Eigen::MatrixBase<Derived>& x,
                                                const BlockParams<Scalar>& block) {
  if (!block.pre_gate) return std::nullopt;
  return gate_forward(x, *block.pre_gate, block.top_k);
}

template <typename Scalar>
struct BlockOutput {
  Vector<Scalar> y;
  std::optional<RoutingDecision> routing_out;
};

template <typename Derived, typename Scalar = typename Derived::Scalar>
Vector<Scalar> mix_experts(const Eigen::MatrixBase<Derived>& x, const BlockParams<Scalar>& block,
                           const RoutingDecision& routing) {
  const int e = static_cast<int>(block.experts.size());
  if (routing.expert_ids.size() != routing.combine_weights.size())
    throw WiringError("routing ids/weights length mismatch");
  Vector<Scalar> acc = Vector<Scalar>::Zero(x.rows());
  for (std::size_t i = 0; i < routing.expert_ids.size(); ++i) {
    const int id = routing.expert_ids[i];
    if (id < 0 || id >= e) throw WiringError("routing selects expert outside [0, E)");
    acc += static_cast<Scalar>(routing.combine_weights[i]) * expert_forward(x, block.experts[id]);
  }
  return acc;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
BlockOutput<Scalar> moe_block_forward(const Eigen::MatrixBase<Derived>& x,
                                      const BlockParams<Scalar>& block,
                                      const RoutingDecision* routing_in) {
  if (routing_in == nullptr) throw WiringError("no routing decision available");
  BlockOutput<Scalar> out;
  out.routing_out = pre_gate_forward(x, block);
  const Vector<Scalar> mixed = mix_experts(x, block, *routing_in);
  out.y = block.dense.lazyProduct(mixed);
  return out;
}

template <typename Scalar>
struct DecoderOutput {
  Vector<Scalar> y;
  std::vector<TraceEntry> trace;  // one per block
};

/// Block-at-a-time decoder pass. With `forced` non-empty, block b uses
/// forced[b] instead of any gate decision (synthetic routing).
template <typename Scalar>
class DecoderStepper {
 public:
  template <typename Derived>
  DecoderStepper(const ModelParams<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                 std::span<const RoutingDecision> forced = {})
      : model_(model), forced_(forced), pending_(model.config.num_blocks), h_(x) {
    if (!x.allFinite()) throw ConfigError("decoder input must be finite");
    if (x.rows() != model.config.d_model) throw ConfigError("decoder input has wrong width");
    if (!forced.empty() && static_cast<int>(forced.size()) != model.config.num_blocks)
      throw WiringError("forced routing must provide one decision per block");
    trace_.reserve(model.config.num_blocks);
  }

  bool done() const { return next_ == model_.config.num_blocks; }
  int next_block() const { return next_; }

  void step() {
    const ModelConfig& cfg = model_.config;
    const int b = next_;
    if (done()) throw WiringError("decoder iteration already complete");
    const BlockParams<Scalar>& block = model_.blocks[b];

    TraceEntry used;
    if (!forced_.empty()) {
      used = TraceEntry{forced_[b], -1};
    } else if (cfg.has_conventional_gate(b)) {
      if (!block.gate) throw WiringError("block " + std::to_string(b) + " lacks its gate");
      used = TraceEntry{gate_forward(h_, *block.gate, block.top_k), b};
    } else {
      if (!pending_[b] || pending_[b]->origin_block != b - cfg.activation_level)
        throw WiringError("no routing decision available for block " + std::to_string(b));
      used = *pending_[b];
    }

    BlockOutput<Scalar> out = moe_block_forward(h_, block, &used.decision);
    if (out.routing_out) {
      const int target = b + cfg.activation_level;
      if (target >= cfg.num_blocks) throw WiringError("pre-gate targets a block past the iteration");
      pending_[target] = TraceEntry{std::move(*out.routing_out), b};
    }
    trace_.push_back(std::move(used));
    h_ = std::move(out.y);
    ++next_;
  }

  DecoderOutput<Scalar> finish() && {
    if (!done()) throw WiringError("decoder iteration finished early");
    return DecoderOutput<Scalar>{std::move(h_), std::move(trace_)};
  }

 private:
  const ModelParams<Scalar>& model_;
  std::span<const RoutingDecision> forced_;
  // Pre-gate outputs waiting for their target block. Scoped to one
  // iteration, so no decision crosses the iteration boundary.
  std::vector<std::optional<TraceEntry>> pending_;
  std::vector<TraceEntry> trace_;
  Vector<Scalar> h_;
  int next_ = 0;
};

template <typename Derived, typename Scalar = typename Derived::Scalar>
DecoderOutput<Scalar> decoder_iteration(const Eigen::MatrixBase<Derived>& x,
                                        const ModelParams<Scalar>& model,
                                        std::span<const RoutingDecision> forced = {}) {
  DecoderStepper<Scalar> stepper(model, x, forced);
  while (!stepper.done()) stepper.step();
  return std::move(stepper).finish();
}

}  // namespace pgmoe
