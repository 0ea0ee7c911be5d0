// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "cospec/common.hpp"
#include "cospec/lm/tabular_model.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

/// [c, SEP, draft_1..draft_K, SEP, target_1..target_K, SEP]; the bonus
/// verification token is not part of the input.
struct ArbitrationInput {
  TokenSeq sequence;
  std::size_t context_length = 0;
  std::size_t block_length = 0;

  std::size_t size() const { return sequence.size(); }
  /// 0-based index of draft position i (0-based).
  std::size_t draft_index(std::size_t i) const { return context_length + 1 + i; }
  std::size_t target_index(std::size_t i) const { return context_length + 2 + block_length + i; }
  std::array<std::size_t, 3> separator_indices() const {
    return {context_length, context_length + 1 + block_length, context_length + 2 + 2 * block_length};
  }
};

inline ArbitrationInput build_arbitration_input(std::span<const Token> context, std::span<const Token> drafted,
                                                std::span<const Token> verified, Token sep) {
  if (verified.size() != drafted.size() + 1) {
    throw InputError("verification must hold K+1 tokens for a block of K");
  }
  if (drafted.empty()) {
    throw InputError("block must be nonempty");
  }
  ArbitrationInput in;
  in.context_length = context.size();
  in.block_length = drafted.size();
  in.sequence.reserve(context.size() + 2 * drafted.size() + 3);
  in.sequence.insert(in.sequence.end(), context.begin(), context.end());
  in.sequence.push_back(sep);
  in.sequence.insert(in.sequence.end(), drafted.begin(), drafted.end());
  in.sequence.push_back(sep);
  in.sequence.insert(in.sequence.end(), verified.begin(), verified.end() - 1);
  in.sequence.push_back(sep);
  return in;
}

inline ArbitrationInput build_arbitration_input(std::span<const Token> context, const DraftBlock& block,
                                                const Verification& verification, const Vocabulary& vocab) {
  return build_arbitration_input(context, block.tokens, verification.tokens, vocab.sep);
}

/// Attention pattern over the arbitration input. Context rows are causal and
/// never see the draft/target region; every row from the first separator on
/// attends to all positions.
class HybridMask {
 public:
  HybridMask(std::size_t context_length, std::size_t block_length)
      : context_length_(context_length), size_(context_length + 2 * block_length + 3), cells_(size_ * size_, 0) {
    if (context_length < 1 || block_length < 1) {
      throw InputError("hybrid mask needs l_c >= 1 and K >= 1");
    }
    for (std::size_t q = 0; q < size_; ++q) {
      const std::size_t visible = q < context_length_ ? q + 1 : size_;
      for (std::size_t k = 0; k < visible; ++k) {
        cells_[q * size_ + k] = 1;
      }
    }
  }

  std::size_t size() const { return size_; }
  std::size_t context_length() const { return context_length_; }

  /// Query row `q` may attend to key column `k` (both 0-based).
  bool allowed(std::size_t q, std::size_t k) const { return cells_.at(q * size_ + k) != 0; }

  /// One line per query row of '0'/'1' characters.
  std::string dump() const {
    std::string out;
    out.reserve(size_ * (size_ + 1));
    for (std::size_t q = 0; q < size_; ++q) {
      for (std::size_t k = 0; k < size_; ++k) out.push_back(cells_[q * size_ + k] ? '1' : '0');
      out.push_back('\n');
    }
    return out;
  }

 private:
  std::size_t context_length_;
  std::size_t size_;
  std::vector<std::uint8_t> cells_;
};

inline HybridMask build_hybrid_mask(std::size_t context_length, std::size_t block_length) {
  return HybridMask(context_length, block_length);
}

}  // namespace cospec
