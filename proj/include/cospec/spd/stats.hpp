// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cospec/common.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

/// tau = (sum of round lengths) / R.
inline double mean_accepted_length(const RunStats& stats) {
  if (stats.rounds == 0) {
    throw StatisticError("mean accepted length is undefined for zero rounds");
  }
  return static_cast<double>(stats.emitted) / static_cast<double>(stats.rounds);
}

/// Relative per-call costs; a target forward costs 1.
struct CostWeights {
  double draft = 0.1;
  double arbitrator = 0.1;
};

/// Tokens per unit of model cost. Target-only decoding scores exactly 1.
inline double cost_model_speedup(const RunStats& stats, const CostWeights& w) {
  if (w.draft < 0.0 || w.arbitrator < 0.0) {
    throw InputError("cost weights must be nonnegative");
  }
  const double cost = static_cast<double>(stats.target_calls) + static_cast<double>(stats.draft_calls) * w.draft +
                      static_cast<double>(stats.arbitrator_calls) * w.arbitrator;
  if (!(cost > 0.0)) {
    throw InputError("cost model denominator is zero");
  }
  return static_cast<double>(stats.emitted) / cost;
}

}  // namespace cospec
