// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"
#include "cospec/lm/task.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

/// A mismatch reached during CoSpec decoding: the round's block and
/// verification, and the completion verified before the round began.
struct MismatchState {
  TaskInstance task;
  TokenSeq prefix;
  std::size_t round = 0;
  std::size_t position = 0;
  DraftBlock block;
  Verification verification;
  Flags delta;
};

struct BranchUtilities {
  double u_draft = 0.0;
  double u_target = 0.0;
  bool exact = false;
  std::size_t samples = 0;
};

enum class EstimatorMode { exact, monte_carlo };

struct UtilityEstimator {
  EstimatorMode mode = EstimatorMode::exact;
  std::size_t samples = 32;
  std::uint64_t seed = 0;
};

inline bool exact_mode_applicable(const CospecSettings& settings, const ArbitrationPolicy& continuation) {
  return settings.temperature == Temperature::zero && settings.rule.mode == DecisionMode::threshold &&
         continuation.deterministic();
}

/// Completes the decode after forcing `action` at the state's position.
inline int branch_outcome(const MismatchState& m, int action, const TabularModel& draft, const TabularModel& target,
                          const ArbitrationPolicy& continuation, const CospecSettings& settings, Rng& rng) {
  const Vocabulary& vocab = target.vocab();
  CospecState st = start_cospec(m.task, settings, m.prefix, vocab.eos);
  if (st.finished) {
    throw ContractError("mismatch state lies past the end of its decode");
  }
  DraftedRound r{m.block, m.verification, m.delta};
  close_round(draft, target, continuation, m.task, settings, st, std::move(r), rng, ForcedAction{m.position, action});
  continue_cospec(draft, target, continuation, m.task, settings, st, rng);
  return score(m.task, st.rollout.output, vocab);
}

/// u_D forces the draft token and keeps scanning the block; u_T forces the
/// target token and closes the round. Both continue under `continuation`.
inline BranchUtilities branch_utilities(const MismatchState& m, const TabularModel& draft, const TabularModel& target,
                                        const ArbitrationPolicy& continuation, const CospecSettings& settings,
                                        const UtilityEstimator& est) {
  if (m.position >= m.delta.size() || m.delta[m.position]) {
    throw InputError("branch utilities need a mismatch position");
  }
  BranchUtilities u;
  if (est.mode == EstimatorMode::exact) {
    if (!exact_mode_applicable(settings, continuation)) {
      throw InputError("exact branch utilities need T=0, a threshold rule and a deterministic continuation policy");
    }
    Rng unused(0);
    u.u_draft = branch_outcome(m, 1, draft, target, continuation, settings, unused);
    u.u_target = branch_outcome(m, 0, draft, target, continuation, settings, unused);
    u.exact = true;
    u.samples = 1;
    return u;
  }
  if (est.samples == 0) {
    throw InputError("Monte Carlo branch utilities need at least one sample");
  }
  const std::uint64_t base =
      derive_seed({est.seed, m.task.seed, m.prefix.size(), m.position, hash_tokens(m.block.tokens, m.round)});
  double sum_d = 0.0;
  double sum_t = 0.0;
  for (std::size_t n = 0; n < est.samples; ++n) {
    Rng rd(derive_seed({base, n, 1}));
    Rng rt(derive_seed({base, n, 0}));
    sum_d += branch_outcome(m, 1, draft, target, continuation, settings, rd);
    sum_t += branch_outcome(m, 0, draft, target, continuation, settings, rt);
  }
  u.u_draft = sum_d / static_cast<double>(est.samples);
  u.u_target = sum_t / static_cast<double>(est.samples);
  u.samples = est.samples;
  return u;
}

/// Mismatch state behind position i of a round being arbitrated.
inline MismatchState state_from_view(const RoundView& view, std::size_t i) {
  MismatchState m;
  m.task = view.task;
  m.prefix.assign(view.context.begin() + static_cast<std::ptrdiff_t>(view.task.prompt.size()), view.context.end());
  m.round = view.round_index;
  m.position = i;
  m.block = view.block;
  m.verification = view.verification;
  m.delta = view.delta;
  return m;
}

/// Accepts the draft token iff u_D >= u_T under the continuation policy.
class OraclePolicy final : public ArbitrationPolicy {
 public:
  OraclePolicy(std::shared_ptr<const ArbitrationPolicy> continuation, UtilityEstimator estimator)
      : continuation_(std::move(continuation)), estimator_(estimator) {
    if (!continuation_) {
      throw InputError("oracle policy needs a continuation policy");
    }
  }

  std::string name() const override { return "oracle"; }

  double accept_prob(const RoundView& view, std::size_t i, std::span<const double>) const override {
    const MismatchState m = state_from_view(view, i);
    const BranchUtilities u = branch_utilities(m, view.draft, view.target, *continuation_, view.settings, estimator_);
    return u.u_draft >= u.u_target ? 1.0 : 0.0;
  }

  const ArbitrationPolicy& continuation() const { return *continuation_; }
  const UtilityEstimator& estimator() const { return estimator_; }

 private:
  std::shared_ptr<const ArbitrationPolicy> continuation_;
  UtilityEstimator estimator_;
};

}  // namespace cospec
