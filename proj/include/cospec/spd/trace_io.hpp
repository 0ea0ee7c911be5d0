// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Round traces are JSON Lines. Field order per record:
//
//   r          round index
//   prefix_len verified completion length when the round began
//   draft      K drafted tokens
//   verify     K+1 verification tokens
//   delta      match flags
//   actions    arbitration actions, or null for target-preserving methods
//   s          tokens emitted by the round
//   probs      pi(a=1|q) per position (null where never evaluated)
//
// Floats carry 9 significant digits.

#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <vector>

#include "cospec/common.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

inline nlohmann::ordered_json trace_float(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round_significant(v, 9);
}

inline nlohmann::ordered_json round_to_json(const RoundRecord& rec) {
  nlohmann::ordered_json j;
  j["r"] = rec.index;
  j["prefix_len"] = rec.prefix_len;
  j["draft"] = rec.draft.tokens;
  j["verify"] = rec.verify.tokens;
  j["delta"] = rec.delta;
  if (rec.actions) {
    j["actions"] = *rec.actions;
  } else {
    j["actions"] = nullptr;
  }
  j["s"] = rec.s;
  auto probs = nlohmann::ordered_json::array();
  for (double p : rec.probs) probs.push_back(trace_float(p));
  j["probs"] = std::move(probs);
  return j;
}

inline void write_trace(std::ostream& out, const std::vector<RoundRecord>& rounds) {
  for (const RoundRecord& rec : rounds) out << round_to_json(rec).dump() << '\n';
}

}  // namespace cospec
