// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pgmoe {

/// Bad model/experiment configuration or malformed input file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gate produced non-finite logits.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Routing decisions wired to the wrong block, or missing.
class WiringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fast-tier capacity exceeded.
class OutOfMemory : public std::runtime_error {
 public:
  explicit OutOfMemory(const std::string& what) : std::runtime_error("OOM: " + what) {}
};

/// A simulation broke one of the checked properties.
class InvariantError : public std::runtime_error {
 public:
  InvariantError(std::string property, const std::string& detail)
      : std::runtime_error(property + ": " + detail), property_(std::move(property)) {}
  const std::string& property() const noexcept { return property_; }

 private:
  std::string property_;
};

}  // namespace pgmoe
