// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cospec/common.hpp"

namespace cospec {

/// K drafted tokens plus the draft distribution each was drawn from.
struct DraftBlock {
  TokenSeq tokens;
  std::vector<Distribution> probs;

  std::size_t size() const { return tokens.size(); }
};

/// Teacher-forced target pass over a block: K+1 predictions (the last is the
/// bonus token), the target rows behind them, and ln p_T of each draft token.
struct Verification {
  TokenSeq tokens;
  std::vector<Distribution> probs;
  std::vector<double> draft_log_probs;

  std::size_t size() const { return tokens.size(); }
};

/// One closed speculative round. Positions are 0-based; `s` is the number of
/// tokens the round appended (1..K+1, truncated at EOS or the length cap).
struct RoundRecord {
  std::size_t index = 0;
  /// Completion tokens already verified when the round began.
  std::size_t prefix_len = 0;
  DraftBlock draft;
  Verification verify;
  Flags delta;
  /// Arbitration actions; absent for target-preserving methods.
  std::optional<Flags> actions;
  std::size_t s = 0;
  /// Rollout-time pi(a=1|q) per position: 1 at matches, NaN where a
  /// mismatch was never evaluated. Empty when there is no arbitration.
  std::vector<double> probs;

  std::size_t block_size() const { return draft.size(); }
};

struct RunStats {
  std::size_t rounds = 0;
  std::size_t emitted = 0;
  std::size_t target_calls = 0;
  std::size_t draft_calls = 0;
  std::size_t arbitrator_calls = 0;
  std::vector<std::size_t> round_lengths;

  void add_round(std::size_t s) {
    ++rounds;
    emitted += s;
    round_lengths.push_back(s);
  }

  RunStats& operator+=(const RunStats& o) {
    rounds += o.rounds;
    emitted += o.emitted;
    target_calls += o.target_calls;
    draft_calls += o.draft_calls;
    arbitrator_calls += o.arbitrator_calls;
    round_lengths.insert(round_lengths.end(), o.round_lengths.begin(), o.round_lengths.end());
    return *this;
  }
};

struct SpdRun {
  TokenSeq output;
  RunStats stats;
  std::vector<RoundRecord> rounds;
};

}  // namespace cospec
