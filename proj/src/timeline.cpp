// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/timeline.hpp"

#include <json.hpp>

#include <algorithm>

namespace pgmoe {

double Timeline::makespan() const {
  double end = 0;
  for (const auto& e : events) end = std::max(end, e.end);
  return end;
}

void Timeline::write_jsonl(std::ostream& os) const {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["lane"] = e.lane == Lane::Compute ? "compute" : "transfer";
    j["label"] = e.label;
    j["iteration"] = e.iteration;
    j["block"] = e.block;
    j["start_s"] = e.start;
    j["end_s"] = e.end;
    os << j.dump() << '\n';
  }
}

}  // namespace pgmoe
