// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "cospec/arbitration/input.hpp"
#include "cospec/common.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

inline constexpr std::size_t kFeatureCount = 9;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "target_logp_draft",  // ln p_T(draft_i | c, draft_<i)
    "target_logp_target", // ln p_T(target_i | c, draft_<i)
    "draft_logp_draft",   // ln p_D(draft_i | c, draft_<i)
    "draft_logp_target",  // ln p_D(target_i | c, draft_<i)
    "position",           // i / K, 1-based i
    "match_fraction",     // matched positions / K
    "prior_mismatches",   // mismatches before i
    "draft_reappears",    // draft_i occurs among target_{i+1..K}
    "constant",
};

using FeatureVector = std::vector<double>;

/// Fixed-size summary of one mismatch for the arbitration head. Both models'
/// rows come from the block and its verification, which were computed under
/// the same teacher-forced contexts the arbitrator sees.
inline FeatureVector extract_features(const ArbitrationInput& input, const DraftBlock& block,
                                      const Verification& verification, std::size_t i) {
  const std::size_t k = input.block_length;
  if (i >= k || block.size() != k || verification.size() != k + 1) {
    throw InputError("feature position or block shape out of range");
  }
  const Token drafted = input.sequence[input.draft_index(i)];
  const Token verified = input.sequence[input.target_index(i)];
  if (drafted == verified) {
    throw ContractError("features are only defined at mismatch positions");
  }
  const auto d = static_cast<std::size_t>(drafted);
  const auto t = static_cast<std::size_t>(verified);

  std::size_t matches = 0;
  std::size_t prior_mismatches = 0;
  bool reappears = false;
  for (std::size_t j = 0; j < k; ++j) {
    const bool match = input.sequence[input.draft_index(j)] == input.sequence[input.target_index(j)];
    matches += match ? 1 : 0;
    if (j < i && !match) ++prior_mismatches;
    if (j > i && input.sequence[input.target_index(j)] == drafted) reappears = true;
  }

  const double kk = static_cast<double>(k);
  return FeatureVector{
      floored_log(verification.probs[i][d]),
      floored_log(verification.probs[i][t]),
      floored_log(block.probs[i][d]),
      floored_log(block.probs[i][t]),
      static_cast<double>(i + 1) / kk,
      static_cast<double>(matches) / kk,
      static_cast<double>(prior_mismatches),
      reappears ? 1.0 : 0.0,
      1.0,
  };
}

}  // namespace cospec
