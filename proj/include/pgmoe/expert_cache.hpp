// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace pgmoe {

enum class CachePolicy { LIFO, LFU, LRU };

std::string to_string(CachePolicy p);
std::optional<CachePolicy> parse_cache_policy(const std::string& name);

using ExpertKey = std::uint64_t;

inline ExpertKey expert_key(int block, int expert) {
  return (static_cast<std::uint64_t>(block) << 32) | static_cast<std::uint32_t>(expert);
}

struct CacheAccess {
  bool hit = false;
  bool inserted = false;
  std::vector<ExpertKey> evicted;
};

/// Fast-tier expert buffer. Victims: LIFO highest insert_seq, LFU lowest
/// frequency (oldest insert on ties), LRU smallest last_use.
class ExpertCache {
 public:
  ExpertCache(CachePolicy policy, std::int64_t capacity_bytes);

  /// capacity = floor(fraction * total_expert_bytes).
  static ExpertCache from_fraction(CachePolicy policy, double fraction, std::int64_t total_expert_bytes);

  CacheAccess access(ExpertKey key, std::int64_t bytes, std::int64_t now_seq);

  CachePolicy policy() const { return policy_; }
  std::int64_t capacity() const { return capacity_; }
  std::int64_t occupied() const { return occupied_; }
  bool contains(ExpertKey key) const { return entries_.count(key) != 0; }
  std::int64_t hits() const { return hits_; }
  std::int64_t accesses() const { return accesses_; }

 private:
  struct Entry {
    std::int64_t bytes = 0;
    std::int64_t insert_seq = 0;
    std::int64_t freq = 0;
    std::int64_t last_use = 0;
  };
  using Rank = std::tuple<std::int64_t, std::int64_t, ExpertKey>;

  Rank rank(ExpertKey key, const Entry& e) const;

  CachePolicy policy_;
  std::int64_t capacity_;
  std::int64_t occupied_ = 0;
  std::int64_t next_insert_ = 0;
  std::int64_t hits_ = 0;
  std::int64_t accesses_ = 0;
  std::unordered_map<ExpertKey, Entry> entries_;
  std::set<Rank> victims_;  // begin() is the next victim
};

}  // namespace pgmoe
