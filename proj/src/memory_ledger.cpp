// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/memory_ledger.hpp"

#include <algorithm>

#include "pgmoe/errors.hpp"

namespace pgmoe {

void MemoryLedger::apply(double time, std::int64_t delta, std::string label) {
  if (!events_.empty() && time < events_.back().time)
    throw InvariantError("ledger-order", "event at " + std::to_string(time) + " after " +
                                             std::to_string(events_.back().time));
  current_ += delta;
  if (current_ < 0) throw InvariantError("ledger-soundness", "negative residency after " + label);
  peak_ = std::max(peak_, current_);
  events_.push_back(Event{time, delta, std::move(label), current_});
}

std::int64_t eq1_peak(std::int64_t non_moe_bytes, std::span<const std::int64_t> per_block_active) {
  if (per_block_active.empty()) return non_moe_bytes;
  if (per_block_active.size() == 1) return non_moe_bytes + per_block_active[0];
  std::int64_t best = 0;
  for (std::size_t n = 0; n + 1 < per_block_active.size(); ++n)
    best = std::max(best, per_block_active[n] + per_block_active[n + 1]);
  return non_moe_bytes + best;
}

}  // namespace pgmoe
