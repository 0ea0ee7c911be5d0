// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>

#include "cospec/common.hpp"
#include "cospec/lm/tabular_model.hpp"

namespace cospec {

/// One problem: a prompt and the canonical completion that solves it.
struct TaskInstance {
  TokenSeq prompt;
  /// Canonical completion: trace, answer delimiter, answer region, EOS.
  TokenSeq answer;
  std::size_t max_length = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

/// Generation cap used for every instance: twice the canonical completion.
inline std::size_t default_max_length(std::size_t completion_length) {
  return std::max<std::size_t>(1, 2 * completion_length);
}

/// Tokens between the first answer delimiter and the EOS that follows it.
/// Missing delimiter or missing EOS (e.g. a truncated output) yields nullopt.
inline std::optional<TokenSeq> parse_answer(std::span<const Token> output, const Vocabulary& vocab) {
  const auto delim = std::find(output.begin(), output.end(), vocab.answer);
  if (delim == output.end()) {
    return std::nullopt;
  }
  const auto end = std::find(delim + 1, output.end(), vocab.eos);
  if (end == output.end()) {
    return std::nullopt;
  }
  return TokenSeq(delim + 1, end);
}

/// Exact-answer utility U(x, y) in {0, 1}; the trace region is ignored.
inline int score(const TaskInstance& task, std::span<const Token> output, const Vocabulary& vocab) {
  const auto expected = parse_answer(task.answer, vocab);
  const auto got = parse_answer(output, vocab);
  if (!expected || !got) {
    return 0;
  }
  return *expected == *got ? 1 : 0;
}

}  // namespace cospec
