// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>

#include "cospec/common.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/lm/task.hpp"
#include "cospec/spd/round.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

inline void require_shared_vocab(const TabularModel& draft, const TabularModel& target) {
  if (!(draft.vocab() == target.vocab())) {
    throw InputError("draft and target must share a vocabulary");
  }
}

/// Greedy exact-match speculative decoding. Each round emits the draft prefix
/// up to the first mismatch and then the target token there (or all K plus
/// the bonus token); the output equals greedy target-only decoding.
inline SpdRun run_vanilla_spd(const TabularModel& draft, const TabularModel& target, const TaskInstance& task,
                              std::size_t k, const DecodeConfig& config) {
  require_shared_vocab(draft, target);
  if (config.temperature != Temperature::zero) {
    throw InputError("vanilla SPD is the greedy variant; use speculative sampling at T=1");
  }
  const std::size_t cap = generation_cap(task, config);
  const Token eos = target.vocab().eos;
  Rng unused(config.seed);

  SpdRun run;
  TokenSeq context = task.prompt;
  bool done = false;
  while (!done) {
    RoundRecord rec;
    rec.index = run.rounds.size();
    rec.prefix_len = run.output.size();
    rec.draft = propose_block(draft, context, k, Temperature::zero, unused);
    rec.verify = verify_block(target, context, rec.draft, Temperature::zero, unused);
    run.stats.draft_calls += k;
    run.stats.target_calls += 1;
    rec.delta = match_vector(rec.draft, rec.verify);

    const std::size_t stop = strict_round_length(rec.delta);
    TokenSeq span(rec.draft.tokens.begin(), rec.draft.tokens.begin() + static_cast<std::ptrdiff_t>(stop - 1));
    span.push_back(rec.verify.tokens[stop - 1]);

    const Emission e = emit_tokens(run.output, span, eos, cap);
    context.insert(context.end(), span.begin(), span.begin() + static_cast<std::ptrdiff_t>(e.count));
    rec.s = e.count;
    run.stats.add_round(e.count);
    run.rounds.push_back(std::move(rec));
    done = e.finished;
  }
  return run;
}

/// min(1, p_T / p_D) for a token the draft actually proposed.
inline double acceptance_ratio(double p_target, double p_draft) {
  if (!(p_draft > 0.0)) {
    throw ContractError("proposed token has zero draft probability");
  }
  return std::min(1.0, p_target / p_draft);
}

/// Normalized max(0, p_T - p_D). When the positive part has no mass the two
/// rows coincide and rejection cannot occur; p_T is returned in that case.
inline Distribution residual_distribution(std::span<const double> p_target, std::span<const double> p_draft) {
  Distribution r(p_target.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = std::max(0.0, p_target[i] - p_draft[i]);
    mass += r[i];
  }
  if (!(mass > 0.0)) {
    return Distribution(p_target.begin(), p_target.end());
  }
  for (double& x : r) x /= mass;
  return r;
}

/// Exact distribution of the token emitted by one accept-or-resample step.
inline Distribution emission_marginal(std::span<const double> p_draft, std::span<const double> p_target) {
  if (p_draft.size() != p_target.size()) {
    throw InputError("draft and target rows differ in size");
  }
  const Distribution residual = residual_distribution(p_target, p_draft);
  Distribution out(p_target.size(), 0.0);
  for (std::size_t y = 0; y < p_draft.size(); ++y) {
    if (p_draft[y] <= 0.0) continue;
    const double accept = acceptance_ratio(p_target[y], p_draft[y]);
    out[y] += p_draft[y] * accept;
    const double reject = p_draft[y] * (1.0 - accept);
    for (std::size_t z = 0; z < out.size(); ++z) out[z] += reject * residual[z];
  }
  return out;
}

struct SpeculativeStep {
  bool accepted = false;
  Token token = 0;
};

/// Accept `drafted` with probability min(1, p_T/p_D), else resample from the residual.
inline SpeculativeStep speculative_step(Token drafted, std::span<const double> p_draft,
                                        std::span<const double> p_target, Rng& rng) {
  const auto d = static_cast<std::size_t>(drafted);
  const double accept = acceptance_ratio(p_target[d], p_draft[d]);
  if (uniform01(rng) < accept) {
    return {true, drafted};
  }
  const Distribution residual = residual_distribution(p_target, p_draft);
  return {false, sample_index(residual, rng)};
}

/// Distribution-preserving speculative sampling at T=1. Round records keep the
/// target rows; verify.tokens holds the accepted draft tokens, the emitted
/// correction (or bonus) token at the stop position, and -1 beyond it.
inline SpdRun run_speculative_sampling(const TabularModel& draft, const TabularModel& target,
                                       const TaskInstance& task, std::size_t k, const DecodeConfig& config,
                                       Rng& rng) {
  require_shared_vocab(draft, target);
  if (config.temperature != Temperature::one) {
    throw InputError("speculative sampling runs at T=1");
  }
  const std::size_t cap = generation_cap(task, config);
  const Token eos = target.vocab().eos;

  SpdRun run;
  TokenSeq context = task.prompt;
  bool done = false;
  while (!done) {
    RoundRecord rec;
    rec.index = run.rounds.size();
    rec.prefix_len = run.output.size();
    rec.draft = propose_block(draft, context, k, Temperature::one, rng);
    run.stats.draft_calls += k;
    run.stats.target_calls += 1;

    // Target rows for the K+1 teacher-forced positions.
    TokenSeq ctx = context;
    for (std::size_t i = 0; i <= k; ++i) {
      const Distribution& p = target.next_distribution(ctx);
      rec.verify.probs.push_back(p);
      if (i < k) {
        rec.verify.draft_log_probs.push_back(floored_log(p[static_cast<std::size_t>(rec.draft.tokens[i])]));
        ctx.push_back(rec.draft.tokens[i]);
      }
    }
    rec.verify.tokens.assign(k + 1, -1);
    rec.delta.assign(k, 0);

    TokenSeq span;
    for (std::size_t i = 0; i < k; ++i) {
      const SpeculativeStep step = speculative_step(rec.draft.tokens[i], rec.draft.probs[i], rec.verify.probs[i], rng);
      span.push_back(step.token);
      rec.verify.tokens[i] = step.token;
      if (!step.accepted) break;
      rec.delta[i] = 1;
    }
    if (span.size() == k && rec.delta[k - 1]) {
      const Token bonus = sample_index(rec.verify.probs[k], rng);
      span.push_back(bonus);
      rec.verify.tokens[k] = bonus;
    }

    const Emission e = emit_tokens(run.output, span, eos, cap);
    context.insert(context.end(), span.begin(), span.begin() + static_cast<std::ptrdiff_t>(e.count));
    rec.s = e.count;
    run.stats.add_round(e.count);
    run.rounds.push_back(std::move(rec));
    done = e.finished;
  }
  return run;
}

/// Target-only decoding expressed as run statistics (one call per token).
inline SpdRun run_target_only(const TabularModel& target, const TaskInstance& task, const DecodeConfig& config,
                              Rng& rng) {
  const Generation g = generate_autoregressive(target, task, config, rng);
  SpdRun run;
  run.output = g.tokens;
  for (std::size_t i = 0; i < g.tokens.size(); ++i) run.stats.add_round(1);
  run.stats.target_calls = g.model_calls;
  return run;
}

}  // namespace cospec
