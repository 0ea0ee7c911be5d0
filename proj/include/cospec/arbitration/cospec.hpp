// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/input.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/lm/task.hpp"
#include "cospec/spd/engine.hpp"
#include "cospec/spd/round.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

/// One sampled arbitration decision at a mismatch.
struct Decision {
  std::size_t round = 0;
  std::size_t position = 0;
  FeatureVector features;
  int action = 0;
  /// pi(a=1|q) under the rollout policy.
  double accept_prob = 0.0;
  /// Probability of the action actually taken.
  double taken_prob = 0.0;
};

struct Rollout {
  TokenSeq output;
  RunStats stats;
  std::vector<RoundRecord> rounds;
  std::vector<Decision> decisions;
  int correct = 0;
  std::uint64_t task_seed = 0;
};

/// Overrides the arbitrator for one round: mismatches before `position` are
/// accepted and `action` is taken at `position` (which must be a mismatch).
struct ForcedAction {
  std::size_t position = 0;
  int action = 0;
};

/// A CoSpec decode that can be resumed round by round.
struct CospecState {
  TokenSeq context;
  Rollout rollout;
  std::size_t cap = 0;
  bool finished = false;
};

inline std::size_t cospec_cap(const TaskInstance& task, const CospecSettings& settings) {
  DecodeConfig config;
  config.temperature = settings.temperature;
  config.max_length = settings.max_length;
  return generation_cap(task, config);
}

/// Starts a decode whose completion already holds `prefix`.
inline CospecState start_cospec(const TaskInstance& task, const CospecSettings& settings,
                                std::span<const Token> prefix, Token eos) {
  CospecState st;
  st.context = task.prompt;
  st.context.insert(st.context.end(), prefix.begin(), prefix.end());
  st.rollout.output.assign(prefix.begin(), prefix.end());
  st.rollout.task_seed = task.seed;
  st.cap = cospec_cap(task, settings);
  st.finished = st.rollout.output.size() >= st.cap || (!prefix.empty() && prefix.back() == eos);
  return st;
}

struct DraftedRound {
  DraftBlock block;
  Verification verification;
  Flags delta;
};

inline DraftedRound draft_and_verify(const TabularModel& draft, const TabularModel& target, CospecState& st,
                                     const CospecSettings& settings, Rng& rng) {
  DraftedRound r;
  r.block = propose_block(draft, st.context, settings.k, settings.temperature, rng);
  r.verification = verify_block(target, st.context, r.block, settings.temperature, rng);
  r.delta = match_vector(r.block, r.verification);
  st.rollout.stats.draft_calls += settings.k;
  st.rollout.stats.target_calls += 1;
  return r;
}

/// Number of leading block positions whose token could still be emitted:
/// position i is reachable when no earlier draft token is EOS and the
/// completion has room for i+1 more tokens.
inline std::size_t reachable_positions(const DraftBlock& block, Token eos, std::size_t produced, std::size_t cap) {
  std::size_t reach = block.size();
  for (std::size_t i = 0; i < block.size(); ++i) {
    if (block.tokens[i] == eos) {
      reach = i + 1;
      break;
    }
  }
  const std::size_t room = cap > produced ? cap - produced : 0;
  return std::min(reach, room);
}

/// Arbitrates a drafted round, emits its tokens and appends the record.
inline void close_round(const TabularModel& draft, const TabularModel& target, const ArbitrationPolicy& policy,
                        const TaskInstance& task, const CospecSettings& settings, CospecState& st, DraftedRound r,
                        Rng& rng, std::optional<ForcedAction> forced = std::nullopt) {
  const std::size_t k = r.block.size();
  const Vocabulary& vocab = target.vocab();
  const std::size_t round_index = st.rollout.rounds.size();
  const std::size_t prefix_len = st.rollout.output.size();
  const std::size_t reach = reachable_positions(r.block, vocab.eos, prefix_len, st.cap);

  if (forced) {
    if (forced->position >= reach || r.delta[forced->position]) {
      throw ContractError("forced action must target a reachable mismatch");
    }
  }

  const ArbitrationInput input = build_arbitration_input(st.context, r.block, r.verification, vocab);
  const RoundView view{task, draft, target, settings, st.context, prefix_len, round_index,
                       r.block, r.verification, r.delta, input};

  RoundRecord rec;
  rec.index = round_index;
  rec.prefix_len = prefix_len;
  rec.probs.assign(k, std::numeric_limits<double>::quiet_NaN());
  Flags actions(k, 0);
  std::vector<FeatureVector> features(k);
  bool any_mismatch = false;
  for (std::size_t i = 0; i < k; ++i) {
    if (r.delta[i]) {
      rec.probs[i] = 1.0;
      actions[i] = 1;
    } else if (i < reach) {
      any_mismatch = true;
      features[i] = extract_features(input, r.block, r.verification, i);
      const double p = policy.accept_prob(view, i, features[i]);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ContractError("policy " + policy.name() + " returned a probability outside [0, 1]");
      }
      rec.probs[i] = p;
    }
  }
  if (any_mismatch) st.rollout.stats.arbitrator_calls += 1;

  std::optional<std::size_t> stop;
  for (std::size_t i = 0; i < reach; ++i) {
    if (r.delta[i]) continue;
    int a = 0;
    if (forced && i < forced->position) {
      a = 1;
    } else if (forced && i == forced->position) {
      a = forced->action;
    } else {
      a = decide(rec.probs[i], settings.rule, rng);
      const double p = rec.probs[i];
      st.rollout.decisions.push_back(Decision{round_index, i, features[i], a, p, a ? p : 1.0 - p});
    }
    actions[i] = static_cast<std::uint8_t>(a);
    if (!a) {
      stop = i;
      break;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (r.delta[i] && !actions[i]) {
      throw ContractError("matched position " + std::to_string(i) + " was rejected");
    }
  }

  TokenSeq span;
  if (stop) {
    span.assign(r.block.tokens.begin(), r.block.tokens.begin() + static_cast<std::ptrdiff_t>(*stop));
    span.push_back(r.verification.tokens[*stop]);
  } else {
    span = r.block.tokens;
    span.push_back(r.verification.tokens[k]);
  }
  const Emission e = emit_tokens(st.rollout.output, span, vocab.eos, st.cap);
  st.context.insert(st.context.end(), span.begin(), span.begin() + static_cast<std::ptrdiff_t>(e.count));
  if (e.count > cospec_round_length(r.delta, actions)) {
    throw ContractError("round emitted past its first rejected mismatch");
  }

  rec.draft = std::move(r.block);
  rec.verify = std::move(r.verification);
  rec.delta = std::move(r.delta);
  rec.actions = std::move(actions);
  rec.s = e.count;
  st.rollout.stats.add_round(e.count);
  st.rollout.rounds.push_back(std::move(rec));
  st.finished = e.finished;
}

/// Runs rounds until EOS or the length cap.
inline void continue_cospec(const TabularModel& draft, const TabularModel& target, const ArbitrationPolicy& policy,
                            const TaskInstance& task, const CospecSettings& settings, CospecState& st, Rng& rng) {
  while (!st.finished) {
    DraftedRound r = draft_and_verify(draft, target, st, settings, rng);
    close_round(draft, target, policy, task, settings, st, std::move(r), rng);
  }
}

/// Full CoSpec decode of one task. At T=0 with a threshold rule and a
/// deterministic policy the rng is never consumed.
inline Rollout run_cospec(const TabularModel& draft, const TabularModel& target, const ArbitrationPolicy& policy,
                          const TaskInstance& task, const CospecSettings& settings, Rng& rng) {
  require_shared_vocab(draft, target);
  if (settings.k < 1) {
    throw InputError("draft length K must be >= 1");
  }
  if (!(settings.rule.lambda >= 0.0 && settings.rule.lambda <= 1.0)) {
    throw InputError("acceptance threshold must lie in [0, 1]");
  }
  CospecState st = start_cospec(task, settings, {}, target.vocab().eos);
  continue_cospec(draft, target, policy, task, settings, st, rng);
  st.rollout.correct = score(task, st.rollout.output, target.vocab());
  return std::move(st.rollout);
}

}  // namespace cospec
