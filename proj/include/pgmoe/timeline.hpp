// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pgmoe {

enum class Lane { Compute, Transfer };

struct TimelineEvent {
  Lane lane = Lane::Compute;
  std::string label;
  int iteration = 0;
  int block = -1;  // -1 for per-iteration events
  double start = 0;
  double end = 0;
};

struct Timeline {
  std::vector<TimelineEvent> events;

  double makespan() const;
  /// One JSON object per line: lane, label, iteration, block, start_s, end_s.
  void write_jsonl(std::ostream& os) const;
};

}  // namespace pgmoe
