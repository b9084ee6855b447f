// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/expert_cache.hpp"

#include <algorithm>
#include <cctype>

#include <cmath>

#include "pgmoe/errors.hpp"

namespace pgmoe {

std::string to_string(CachePolicy p) {
  switch (p) {
    case CachePolicy::LIFO: return "lifo";
    case CachePolicy::LFU: return "lfu";
    case CachePolicy::LRU: return "lru";
  }
  return "?";
}

std::optional<CachePolicy> parse_cache_policy(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (CachePolicy p : {CachePolicy::LIFO, CachePolicy::LFU, CachePolicy::LRU})
    if (to_string(p) == lower) return p;
  return std::nullopt;
}

ExpertCache::ExpertCache(CachePolicy policy, std::int64_t capacity_bytes)
    : policy_(policy), capacity_(capacity_bytes) {
  if (capacity_bytes < 0) throw ConfigError("cache capacity must be >= 0");
}

ExpertCache ExpertCache::from_fraction(CachePolicy policy, double fraction,
                                       std::int64_t total_expert_bytes) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("cache_fraction must be in [0, 1]");
  return ExpertCache(policy,
                     static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(total_expert_bytes))));
}

ExpertCache::Rank ExpertCache::rank(ExpertKey key, const Entry& e) const {
  switch (policy_) {
    case CachePolicy::LIFO: return {-e.insert_seq, 0, key};
    case CachePolicy::LFU: return {e.freq, e.insert_seq, key};
    case CachePolicy::LRU: return {e.last_use, e.insert_seq, key};
  }
  return {};
}

CacheAccess ExpertCache::access(ExpertKey key, std::int64_t bytes, std::int64_t now_seq) {
  ++accesses_;
  CacheAccess out;
  if (auto it = entries_.find(key); it != entries_.end()) {
    victims_.erase(rank(key, it->second));
    ++it->second.freq;
    it->second.last_use = now_seq;
    victims_.insert(rank(key, it->second));
    ++hits_;
    out.hit = true;
    return out;
  }
  if (bytes > capacity_) return out;  // never cacheable

  while (occupied_ + bytes > capacity_) {
    const ExpertKey victim = std::get<2>(*victims_.begin());
    victims_.erase(victims_.begin());
    occupied_ -= entries_.at(victim).bytes;
    entries_.erase(victim);
    out.evicted.push_back(victim);
  }
  Entry e{bytes, next_insert_++, 1, now_seq};
  entries_.emplace(key, e);
  victims_.insert(rank(key, e));
  occupied_ += bytes;
  out.inserted = true;
  return out;
}

}  // namespace pgmoe
