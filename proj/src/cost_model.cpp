// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pgmoe/cost_model.hpp"

#include <cmath>
#include <map>

#include "pgmoe/errors.hpp"
#include "pgmoe/kv_file.hpp"

namespace pgmoe {

void CostModel::validate() const {
  for (double r : {gate_flops_rate, expert_flops_rate, non_moe_flops_rate, head_flops_rate})
    if (!(r > 0) || !std::isfinite(r)) throw ConfigError("cost model rates must be finite and > 0");
  tier.validate();
}

CostModel load_calibration(const std::string& path) {
  std::map<std::string, double*> slots;
  CostModel cm;
  slots["gate_flops_rate"] = &cm.gate_flops_rate;
  slots["expert_flops_rate"] = &cm.expert_flops_rate;
  slots["non_moe_flops_rate"] = &cm.non_moe_flops_rate;
  slots["head_flops_rate"] = &cm.head_flops_rate;
  for (const KeyValue& kv : read_key_value_file(path)) {
    auto it = slots.find(kv.key);
    if (it == slots.end()) throw ConfigError(path + ": unknown calibration key " + kv.key);
    *it->second = parse_double(kv);
    slots.erase(it);
  }
  if (!slots.empty()) throw ConfigError(path + ": missing calibration key " + slots.begin()->first);
  cm.tier = *tier_preset("pcie4");
  cm.validate();
  return cm;
}

}  // namespace pgmoe
