// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Flat little-endian weight file:
//   "PGMOE1" | int32 d_model, d_ff, num_blocks, E, top_k, activation_level
//   then per block: [gate] [pre_gate] {W1, W2} x E, dense
// Gates appear only where the wiring needs them. Every matrix is float32,
// row-major in its logical shape; gates are logically d_model x E.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "pgmoe/model.hpp"

namespace pgmoe {

inline constexpr std::array<char, 6> kWeightMagic{'P', 'G', 'M', 'O', 'E', '1'};

namespace detail {

static_assert(std::endian::native == std::endian::little, "weight file I/O assumes little-endian host");

inline void put_i32(std::ostream& os, std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

inline std::int32_t get_i32(std::istream& is) {
  std::int32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw ConfigError("weight file truncated in header");
  return v;
}

/// Writes `m` (or its transpose) row-major.
template <typename Scalar>
void put_matrix(std::ostream& os, const Matrix<Scalar>& m, bool transposed) {
  const Eigen::Index rows = transposed ? m.cols() : m.rows();
  const Eigen::Index cols = transposed ? m.rows() : m.cols();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const float v = static_cast<float>(transposed ? m(c, r) : m(r, c));
      os.write(reinterpret_cast<const char*>(&v), 4);
    }
}

template <typename Scalar>
Matrix<Scalar> get_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols, bool transposed) {
  Matrix<Scalar> m(transposed ? cols : rows, transposed ? rows : cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      float v = 0;
      if (!is.read(reinterpret_cast<char*>(&v), 4)) throw ConfigError("weight file truncated");
      if (!std::isfinite(v)) throw ConfigError("weight file contains non-finite value");
      (transposed ? m(c, r) : m(r, c)) = static_cast<Scalar>(v);
    }
  return m;
}

}  // namespace detail

template <typename Scalar>
void write_weights(const std::string& path, const ModelParams<Scalar>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open weight file for writing: " + path);
  const ModelConfig& c = model.config;
  os.write(kWeightMagic.data(), kWeightMagic.size());
  for (int v : {c.d_model, c.d_ff, c.num_blocks, c.num_experts, c.top_k, c.activation_level})
    detail::put_i32(os, v);
  for (const auto& block : model.blocks) {
    if (block.gate) detail::put_matrix(os, *block.gate, true);
    if (block.pre_gate) detail::put_matrix(os, *block.pre_gate, true);
    for (const auto& ex : block.experts) {
      detail::put_matrix(os, ex.w1, false);
      detail::put_matrix(os, ex.w2, false);
    }
    detail::put_matrix(os, block.dense, false);
  }
  if (!os) throw ConfigError("failed writing weight file: " + path);
}

/// Accounting-only fields (dtype_bytes, remainder, vocab, seed) come from
/// `base`; the header overrides all shape fields.
template <typename Scalar = double>
ModelParams<Scalar> read_weights(const std::string& path, ModelConfig base = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open weight file: " + path);
  std::array<char, 6> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kWeightMagic)
    throw ConfigError("not a PGMOE1 weight file: " + path);
  base.d_model = detail::get_i32(is);
  base.d_ff = detail::get_i32(is);
  base.num_blocks = detail::get_i32(is);
  base.num_experts = detail::get_i32(is);
  base.top_k = detail::get_i32(is);
  base.activation_level = detail::get_i32(is);
  base.validate();

  const int d = base.d_model, f = base.d_ff, e = base.num_experts;
  ModelParams<Scalar> model{base, {}};
  for (int b = 0; b < base.num_blocks; ++b) {
    BlockParams<Scalar> block;
    block.index = b;
    block.top_k = base.top_k;
    if (base.has_conventional_gate(b)) block.gate = detail::get_matrix<Scalar>(is, d, e, true);
    if (base.has_pre_gate(b)) block.pre_gate = detail::get_matrix<Scalar>(is, d, e, true);
    for (int i = 0; i < e; ++i) {
      ExpertParams<Scalar> ex;
      ex.w1 = detail::get_matrix<Scalar>(is, f, d, false);
      ex.w2 = detail::get_matrix<Scalar>(is, d, f, false);
      block.experts.push_back(std::move(ex));
    }
    block.dense = detail::get_matrix<Scalar>(is, d, d, false);
    model.blocks.push_back(std::move(block));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("trailing bytes in weight file");
  return model;
}

}  // namespace pgmoe
