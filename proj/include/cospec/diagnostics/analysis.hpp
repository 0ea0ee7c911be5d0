// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/common.hpp"
#include "cospec/diagnostics/branch.hpp"

namespace cospec {

struct GapResult {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// lhs = mean(max(u_D, u_T)) - mean(u_T); rhs = mean((u_D - u_T)_+).
inline GapResult complementarity_gap(std::span<const BranchUtilities> states) {
  if (states.empty()) {
    throw InputError("complementarity gap over an empty state set");
  }
  double best = 0.0;
  double faithful = 0.0;
  double positive = 0.0;
  for (const BranchUtilities& u : states) {
    best += std::max(u.u_draft, u.u_target);
    faithful += u.u_target;
    positive += std::max(0.0, u.u_draft - u.u_target);
  }
  const double n = static_cast<double>(states.size());
  return {best / n - faithful / n, positive / n};
}

enum class MismatchCategory { draft_better, target_better, both_correct, both_wrong };

inline constexpr std::array<MismatchCategory, 4> kMismatchCategories = {
    MismatchCategory::draft_better, MismatchCategory::target_better, MismatchCategory::both_correct,
    MismatchCategory::both_wrong};

inline std::string category_name(MismatchCategory c) {
  switch (c) {
    case MismatchCategory::draft_better:
      return "draft better";
    case MismatchCategory::target_better:
      return "target better";
    case MismatchCategory::both_correct:
      return "both correct";
    case MismatchCategory::both_wrong:
      return "both wrong";
  }
  return "?";
}

inline MismatchCategory categorize(const BranchUtilities& u) {
  auto binary = [](double v) { return v == 0.0 || v == 1.0; };
  if (!binary(u.u_draft) || !binary(u.u_target)) {
    throw InputError("mismatch categories need {0,1} branch utilities");
  }
  if (u.u_draft == 1.0) return u.u_target == 1.0 ? MismatchCategory::both_correct : MismatchCategory::draft_better;
  return u.u_target == 1.0 ? MismatchCategory::target_better : MismatchCategory::both_wrong;
}

/// A reached mismatch, its branch utilities and the decision the policy took.
struct AnalyzedState {
  MismatchState state;
  BranchUtilities utilities;
  int action = 0;
  double accept_prob = 0.0;
};

struct CategoryStats {
  std::string name;
  std::size_t count = 0;
  double share = 0.0;
  /// Fraction with u_D >= u_T.
  double draft_not_worse = 0.0;
  double draft_accept_rate = 0.0;
  /// Fraction where the chosen branch is at least as good as the other.
  double agreement = 0.0;
};

/// Row 0 aggregates all states; rows 1..4 follow kMismatchCategories.
struct MismatchBreakdown {
  std::size_t total = 0;
  std::vector<CategoryStats> rows;
};

inline bool decision_agrees(const BranchUtilities& u, int action) {
  return action ? u.u_draft >= u.u_target : u.u_target >= u.u_draft;
}

inline CategoryStats summarize_states(const std::string& name, std::span<const AnalyzedState* const> states,
                                      std::size_t total) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CategoryStats c;
  c.name = name;
  c.count = states.size();
  c.share = total ? static_cast<double>(c.count) / static_cast<double>(total) : nan;
  if (states.empty()) {
    c.draft_not_worse = c.draft_accept_rate = c.agreement = nan;
    return c;
  }
  std::size_t not_worse = 0;
  std::size_t accepted = 0;
  std::size_t agree = 0;
  for (const AnalyzedState* s : states) {
    not_worse += s->utilities.u_draft >= s->utilities.u_target ? 1 : 0;
    accepted += s->action ? 1 : 0;
    agree += decision_agrees(s->utilities, s->action) ? 1 : 0;
  }
  const double n = static_cast<double>(states.size());
  c.draft_not_worse = static_cast<double>(not_worse) / n;
  c.draft_accept_rate = static_cast<double>(accepted) / n;
  c.agreement = static_cast<double>(agree) / n;
  return c;
}

inline MismatchBreakdown mismatch_breakdown(std::span<const AnalyzedState> states) {
  MismatchBreakdown b;
  b.total = states.size();
  std::vector<const AnalyzedState*> all;
  std::array<std::vector<const AnalyzedState*>, 4> by_cat;
  for (const AnalyzedState& s : states) {
    all.push_back(&s);
    by_cat[static_cast<std::size_t>(categorize(s.utilities))].push_back(&s);
  }
  b.rows.push_back(summarize_states("all", all, b.total));
  for (MismatchCategory c : kMismatchCategories) {
    b.rows.push_back(summarize_states(category_name(c), by_cat[static_cast<std::size_t>(c)], b.total));
  }
  return b;
}

struct Recovery {
  double value = 0.0;
  bool degenerate = false;
};

/// (cospec - target) / (union - target); an empty headroom is reported as 0
/// with the degenerate flag set.
inline Recovery recovery_metric(std::size_t target_correct, std::size_t union_correct, std::size_t cospec_correct) {
  if (union_correct < target_correct) {
    throw InputError("oracle union cannot solve fewer instances than the target");
  }
  if (union_correct == target_correct) {
    return {0.0, true};
  }
  const double num = static_cast<double>(cospec_correct) - static_cast<double>(target_correct);
  return {num / static_cast<double>(union_correct - target_correct), false};
}

struct ComplementarityReport {
  std::size_t total = 0;
  std::size_t target_correct = 0;
  std::size_t draft_correct = 0;
  std::size_t union_correct = 0;
  std::size_t cospec_correct = 0;
  Recovery recovery;
};

/// Per-instance 0/1 scores of target-only, draft-only and CoSpec decoding on
/// the same suite.
inline ComplementarityReport complementarity_report(std::span<const int> target_scores,
                                                    std::span<const int> draft_scores,
                                                    std::span<const int> cospec_scores) {
  if (target_scores.size() != draft_scores.size() || target_scores.size() != cospec_scores.size()) {
    throw InputError("complementarity report needs all systems scored on the same suite");
  }
  ComplementarityReport r;
  r.total = target_scores.size();
  for (std::size_t i = 0; i < r.total; ++i) {
    r.target_correct += target_scores[i] ? 1 : 0;
    r.draft_correct += draft_scores[i] ? 1 : 0;
    r.union_correct += (target_scores[i] || draft_scores[i]) ? 1 : 0;
    r.cospec_correct += cospec_scores[i] ? 1 : 0;
  }
  r.recovery = recovery_metric(r.target_correct, r.union_correct, r.cospec_correct);
  return r;
}

/// Mismatch states a rollout actually decided (its effective decisions).
inline std::vector<MismatchState> decided_states(const Rollout& rollout, const TaskInstance& task) {
  std::vector<MismatchState> out;
  for (const RoundRecord& rec : rollout.rounds) {
    if (!rec.actions) continue;
    const std::size_t k = rec.delta.size();
    const std::size_t limit = std::min(rec.s, k);
    for (std::size_t i = 0; i < limit; ++i) {
      if (rec.delta[i]) continue;
      MismatchState m;
      m.task = task;
      m.prefix.assign(rollout.output.begin(), rollout.output.begin() + static_cast<std::ptrdiff_t>(rec.prefix_len));
      m.round = rec.index;
      m.position = i;
      m.block = rec.draft;
      m.verification = rec.verify;
      m.delta = rec.delta;
      out.push_back(std::move(m));
    }
  }
  return out;
}

/// Decodes `task` with `policy`, then estimates branch utilities under
/// `continuation` for every decided mismatch.
inline std::vector<AnalyzedState> analyze_task(const TabularModel& draft, const TabularModel& target,
                                               const ArbitrationPolicy& policy,
                                               const ArbitrationPolicy& continuation, const TaskInstance& task,
                                               const CospecSettings& settings, const UtilityEstimator& est, Rng& rng) {
  const Rollout ro = run_cospec(draft, target, policy, task, settings, rng);
  std::vector<AnalyzedState> out;
  for (MismatchState& m : decided_states(ro, task)) {
    const RoundRecord& rec = ro.rounds[m.round];
    AnalyzedState a;
    a.action = (*rec.actions)[m.position];
    a.accept_prob = rec.probs[m.position];
    a.utilities = branch_utilities(m, draft, target, continuation, settings, est);
    a.state = std::move(m);
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace cospec
