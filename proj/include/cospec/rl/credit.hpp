// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/common.hpp"
#include "cospec/spd/round.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

struct RewardConfig {
  double alpha = 1.0;
  double beta = 0.25;
  double eta_fail = 0.5;
  double epsilon = 1e-8;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("reward.alpha and reward.beta must be >= 0");
    if (!(eta_fail > 0.0 && eta_fail <= 1.0)) throw ConfigError("reward.eta_fail must lie in (0, 1]");
    if (!(epsilon > 0.0)) throw ConfigError("reward.epsilon must be > 0");
  }
};

/// Mismatch positions (0-based) up to min(s, K): the decisions that shaped the round.
inline std::vector<std::size_t> effective_actions(std::span<const std::uint8_t> delta, std::size_t s) {
  const std::size_t limit = std::min(s, delta.size());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < limit; ++i) {
    if (!delta[i]) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> effective_actions(const RoundRecord& rec) { return effective_actions(rec.delta, rec.s); }

/// rho = (s - i*) / ((K+1) - i*) with i* the 1-based first mismatch.
inline double round_progress(std::span<const std::uint8_t> delta, std::size_t s) {
  const auto m = first_mismatch(delta);
  if (!m) {
    throw ContractError("round progress is undefined for a round without mismatches");
  }
  const double istar = static_cast<double>(*m + 1);
  const double k = static_cast<double>(delta.size());
  return (static_cast<double>(s) - istar) / ((k + 1.0) - istar);
}

/// Index of the first rejected effective decision, or K (the K+1 sentinel, 0-based).
inline std::size_t rejection_index(const RoundRecord& rec) {
  if (!rec.actions) {
    throw ContractError("round has no arbitration actions");
  }
  for (std::size_t i : effective_actions(rec)) {
    if (!(*rec.actions)[i]) return i;
  }
  return rec.delta.size();
}

/// Per-position shaped rewards of an incorrect rollout's round: accepted
/// mismatches before the first rejection get -alpha*|l|, the rejection -beta.
inline std::vector<double> failure_rewards(const RoundRecord& rec, const RewardConfig& cfg) {
  const std::size_t k = rec.delta.size();
  std::vector<double> g(k, 0.0);
  const std::size_t rej = rejection_index(rec);
  for (std::size_t i : effective_actions(rec)) {
    if (i < rej) {
      const double surprisal = -rec.verify.draft_log_probs.at(i);
      g[i] = -cfg.alpha * std::abs(surprisal);
    } else if (i == rej) {
      g[i] = -cfg.beta;
    }
  }
  return g;
}

/// Per-position rewards g_{r,i} for every round of a scored rollout.
inline std::vector<std::vector<double>> shaped_rewards(const Rollout& ro, const RewardConfig& cfg) {
  std::vector<std::vector<double>> g;
  g.reserve(ro.rounds.size());
  for (const RoundRecord& rec : ro.rounds) {
    if (ro.correct) {
      std::vector<double> row(rec.delta.size(), 0.0);
      const auto eff = effective_actions(rec);
      if (!eff.empty()) {
        const double rho = round_progress(rec.delta, rec.s);
        for (std::size_t i : eff) row[i] = rho;
      }
      g.push_back(std::move(row));
    } else {
      g.push_back(failure_rewards(rec, cfg));
    }
  }
  return g;
}

inline double rollout_return(const Rollout& ro, const RewardConfig& cfg) {
  double j = 0.0;
  for (const auto& row : shaped_rewards(ro, cfg)) {
    for (double v : row) j += v;
  }
  return j;
}

enum class GroupType { all_correct, all_incorrect, mixed };

inline GroupType group_type(std::span<const int> correct) {
  if (correct.empty()) throw InputError("empty rollout group");
  const auto n = static_cast<std::size_t>(std::count_if(correct.begin(), correct.end(), [](int c) { return c != 0; }));
  if (n == correct.size()) return GroupType::all_correct;
  if (n == 0) return GroupType::all_incorrect;
  return GroupType::mixed;
}

/// gamma = sum|J-| / (sum J+ + eps); correct returns are scaled by gamma.
inline std::vector<double> rebalance_group(std::span<const double> returns, std::span<const int> correct,
                                           double epsilon) {
  if (returns.size() != correct.size()) throw InputError("returns and correctness flags differ in length");
  if (group_type(correct) != GroupType::mixed) {
    throw ContractError("rebalancing applies to mixed groups only");
  }
  double pos = 0.0;
  double neg = 0.0;
  for (std::size_t m = 0; m < returns.size(); ++m) {
    if (correct[m]) {
      pos += returns[m];
    } else {
      neg += std::abs(returns[m]);
    }
  }
  const double gamma = neg / (pos + epsilon);
  std::vector<double> out(returns.begin(), returns.end());
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (correct[m]) out[m] *= gamma;
  }
  return out;
}

/// eta * (J - mean) / (std + eps), population std over the group.
inline std::vector<double> group_advantages(std::span<const double> returns, GroupType type, const RewardConfig& cfg) {
  if (returns.size() < 2) throw InputError("group advantages need M >= 2");
  const double n = static_cast<double>(returns.size());
  const double mu = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double var = 0.0;
  for (double j : returns) var += (j - mu) * (j - mu);
  const double sigma = std::sqrt(var / n);
  const double eta = type == GroupType::all_incorrect ? cfg.eta_fail : 1.0;
  std::vector<double> adv;
  adv.reserve(returns.size());
  for (double j : returns) adv.push_back(eta * (j - mu) / (sigma + cfg.epsilon));
  return adv;
}

/// Returns -> rebalancing for mixed groups -> normalization.
inline std::vector<double> rollout_advantages(std::span<const double> returns, std::span<const int> correct,
                                              const RewardConfig& cfg) {
  const GroupType type = group_type(correct);
  if (type == GroupType::mixed) {
    const auto balanced = rebalance_group(returns, correct, cfg.epsilon);
    return group_advantages(balanced, type, cfg);
  }
  return group_advantages(returns, type, cfg);
}

struct DecisionCredit {
  /// [round][position]
  std::vector<std::vector<double>> advantage;
  std::vector<std::vector<double>> reward;
  std::vector<std::vector<std::uint8_t>> effective;
};

/// Correct rollouts give each effective decision rho_r * Adv; incorrect ones
/// split Adv in proportion to |g|.
inline DecisionCredit allocate_advantages(const Rollout& ro, double adv, const RewardConfig& cfg) {
  DecisionCredit c;
  c.reward = shaped_rewards(ro, cfg);
  double total_abs = 0.0;
  for (const auto& row : c.reward) {
    for (double v : row) total_abs += std::abs(v);
  }
  for (std::size_t r = 0; r < ro.rounds.size(); ++r) {
    const RoundRecord& rec = ro.rounds[r];
    const std::size_t k = rec.delta.size();
    std::vector<double> a(k, 0.0);
    std::vector<std::uint8_t> eff(k, 0);
    for (std::size_t i : effective_actions(rec)) {
      eff[i] = 1;
      if (ro.correct) {
        a[i] = c.reward[r][i] * adv;
      } else if (total_abs > 0.0) {
        a[i] = std::abs(c.reward[r][i]) / total_abs * adv;
      }
    }
    c.advantage.push_back(std::move(a));
    c.effective.push_back(std::move(eff));
  }
  return c;
}

}  // namespace cospec
