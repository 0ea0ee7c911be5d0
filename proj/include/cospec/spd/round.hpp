// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>

#include "cospec/common.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/lm/tabular_model.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

/// K tokens drafted autoregressively after `context` (K draft calls).
inline DraftBlock propose_block(const TabularModel& draft, std::span<const Token> context, std::size_t k,
                                Temperature temperature, Rng& rng) {
  if (k < 1) {
    throw InputError("draft length K must be >= 1");
  }
  DraftBlock block;
  block.tokens.reserve(k);
  block.probs.reserve(k);
  TokenSeq ctx(context.begin(), context.end());
  for (std::size_t i = 0; i < k; ++i) {
    const Distribution& p = draft.next_distribution(ctx);
    const Token t = temperature == Temperature::zero ? argmax_lowest(p) : sample_index(p, rng);
    block.tokens.push_back(t);
    block.probs.push_back(p);
    ctx.push_back(t);
  }
  return block;
}

/// One teacher-forced target pass: prediction i conditions on context and the
/// draft tokens before i; prediction K is the bonus token. Charged as a
/// single target call by the callers.
inline Verification verify_block(const TabularModel& target, std::span<const Token> context,
                                 const DraftBlock& block, Temperature temperature, Rng& rng) {
  const std::size_t k = block.size();
  Verification v;
  v.tokens.reserve(k + 1);
  v.probs.reserve(k + 1);
  v.draft_log_probs.reserve(k);
  TokenSeq ctx(context.begin(), context.end());
  for (std::size_t i = 0; i <= k; ++i) {
    const Distribution& p = target.next_distribution(ctx);
    v.tokens.push_back(temperature == Temperature::zero ? argmax_lowest(p) : sample_index(p, rng));
    v.probs.push_back(p);
    if (i < k) {
      const Token drafted = block.tokens[i];
      v.draft_log_probs.push_back(floored_log(p[static_cast<std::size_t>(drafted)]));
      ctx.push_back(drafted);
    }
  }
  return v;
}

inline Flags match_vector(std::span<const Token> drafted, std::span<const Token> verified) {
  if (verified.size() != drafted.size() + 1) {
    throw InputError("verification must hold K+1 tokens for a block of K");
  }
  Flags delta(drafted.size());
  for (std::size_t i = 0; i < drafted.size(); ++i) {
    delta[i] = drafted[i] == verified[i] ? 1 : 0;
  }
  return delta;
}

inline Flags match_vector(const DraftBlock& block, const Verification& verification) {
  return match_vector(block.tokens, verification.tokens);
}

/// 0-based index of the first mismatch, if any.
inline std::optional<std::size_t> first_mismatch(std::span<const std::uint8_t> delta) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!delta[i]) return i;
  }
  return std::nullopt;
}

/// Exact-match round length: first mismatch (1-based) or K+1.
inline std::size_t strict_round_length(std::span<const std::uint8_t> delta) {
  const auto m = first_mismatch(delta);
  return m ? *m + 1 : delta.size() + 1;
}

struct Emission {
  std::size_t count = 0;
  bool finished = false;
};

/// Appends `tokens` to `output`, stopping after EOS or once `cap` is reached.
inline Emission emit_tokens(TokenSeq& output, std::span<const Token> tokens, Token eos, std::size_t cap) {
  Emission e;
  for (Token t : tokens) {
    if (output.size() >= cap) {
      e.finished = true;
      return e;
    }
    output.push_back(t);
    ++e.count;
    if (t == eos) {
      e.finished = true;
      return e;
    }
  }
  e.finished = output.size() >= cap;
  return e;
}

}  // namespace cospec
