// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/input.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/arbitration/policy_io.hpp"
#include "cospec/diagnostics/branch.hpp"
#include "cospec/lm/chain_sum.hpp"
#include "cospec/lm/suite_io.hpp"
#include "cospec/spd/engine.hpp"

using namespace cospec;

namespace {

struct Experts {
  ChainFamily family{4, 0};
  TabularModel target = make_noisy_expert(family, 0.97, 1);
  TabularModel draft = make_noisy_expert(family, 0.90, 2);
};

const Experts& experts() {
  static const Experts e;
  return e;
}

// Mask rules restated directly over 1-based query/key indices.
bool rule_allows(std::size_t i, std::size_t j, std::size_t lc) {
  if (i <= lc && j <= lc) return j <= i;
  if (i <= lc && j > lc) return false;
  return true;
}

// Scan for s under CoSpec written from the definition, one position at a time.
std::size_t brute_cospec_length(const Flags& d, const Flags& a) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool rejected_mismatch = d[i] == 0 && a[i] == 0;
    if (rejected_mismatch) return i + 1;
  }
  return d.size() + 1;
}

}  // namespace

TEST(ArbitrationInput, LayoutForTinyBlock) {
  const TokenSeq ctx = {4, 5};
  const ArbitrationInput in = build_arbitration_input(ctx, TokenSeq{7}, TokenSeq{8, 9}, 99);
  EXPECT_EQ(in.sequence, (TokenSeq{4, 5, 99, 7, 99, 8, 99}));
  EXPECT_EQ(in.size(), 7u);
  // 1-based draft index l_c + 2 for i = 1.
  EXPECT_EQ(in.draft_index(0) + 1, ctx.size() + 2);
  EXPECT_EQ(in.separator_indices(), (std::array<std::size_t, 3>{2, 4, 6}));
}

TEST(ArbitrationInput, LengthFormulaAndBonusOmitted) {
  const TokenSeq ctx(100, 1);
  const TokenSeq drafted(25, 2);
  TokenSeq verified(26, 3);
  verified.back() = 4;
  const ArbitrationInput in = build_arbitration_input(ctx, drafted, verified, 0);
  EXPECT_EQ(in.size(), 153u);
  EXPECT_EQ(std::count(in.sequence.begin(), in.sequence.end(), 4), 0);
  EXPECT_THROW(build_arbitration_input(ctx, drafted, TokenSeq(25, 3), 0), InputError);
}

TEST(HybridMask, TinyMaskCellByCell) {
  const HybridMask m = build_hybrid_mask(2, 1);
  EXPECT_EQ(m.dump(),
            "1000000\n"
            "1100000\n"
            "1111111\n"
            "1111111\n"
            "1111111\n"
            "1111111\n"
            "1111111\n");
}

TEST(HybridMask, MatchesRulePredicateForAllSmallShapes) {
  for (std::size_t k = 1; 2 * k + 4 <= 64; ++k) {
    for (std::size_t lc = 1; lc + 2 * k + 3 <= 64; ++lc) {
      const HybridMask m(lc, k);
      for (std::size_t q = 0; q < m.size(); ++q) {
        for (std::size_t c = 0; c < m.size(); ++c) {
          ASSERT_EQ(m.allowed(q, c), rule_allows(q + 1, c + 1, lc)) << lc << " " << k << " " << q << " " << c;
        }
      }
    }
  }
  EXPECT_THROW(HybridMask(0, 1), InputError);
}

TEST(Features, FixedDimensionAndMatchPrecondition) {
  const Experts& e = experts();
  const TaskInstance t = make_chain_task(5, 4);
  Rng rng(0);
  for (std::size_t k : {3u, 7u, 25u}) {
    DraftBlock b = propose_block(e.draft, t.prompt, k, Temperature::zero, rng);
    b.tokens[0] = static_cast<Token>((b.tokens[0] + 1) % 10);
    const Verification v = verify_block(e.target, t.prompt, b, Temperature::zero, rng);
    const Flags d = match_vector(b, v);
    const ArbitrationInput in = build_arbitration_input(t.prompt, b, v, e.target.vocab());
    for (std::size_t i = 0; i < k; ++i) {
      if (d[i]) {
        EXPECT_THROW(extract_features(in, b, v, i), ContractError);
      } else {
        EXPECT_EQ(extract_features(in, b, v, i).size(), kFeatureCount);
      }
    }
  }
}

TEST(Features, TargetLogProbsDifferAtMismatch) {
  const Experts& e = experts();
  const TaskInstance t = make_chain_task(6, 4);
  Rng rng(0);
  DraftBlock b = propose_block(e.target, t.prompt, 4, Temperature::zero, rng);
  b.tokens[1] = static_cast<Token>((b.tokens[1] + 3) % 10);
  const Verification v = verify_block(e.target, t.prompt, b, Temperature::zero, rng);
  const ArbitrationInput in = build_arbitration_input(t.prompt, b, v, e.target.vocab());
  const FeatureVector f = extract_features(in, b, v, 1);
  EXPECT_NE(f[0], f[1]);
  TokenSeq ctx = t.prompt;
  ctx.push_back(b.tokens[0]);
  EXPECT_DOUBLE_EQ(f[0], target_log_prob(e.target, ctx, b.tokens[1]));
  EXPECT_DOUBLE_EQ(f[1], target_log_prob(e.target, ctx, v.tokens[1]));
  EXPECT_DOUBLE_EQ(f[4], 2.0 / 4.0);
  EXPECT_EQ(f[8], 1.0);
}

TEST(Policy, LogitExamples) {
  PolicyParams p = PolicyParams::zeros(3);
  const double f[] = {2.5, -1.0, 4.0};
  EXPECT_EQ(policy_logit(p, f), 0.0);
  p.weights = {1.0, 0.0, 0.0};
  EXPECT_EQ(policy_logit(p, f), 2.5);
  p.weights = {0.3, -2.0, 0.25};
  p.bias = 0.7;
  EXPECT_DOUBLE_EQ(policy_logit(p, f), 0.3 * 2.5 + 2.0 + 1.0 + 0.7);
  const double short_f[] = {1.0};
  EXPECT_THROW(policy_logit(p, short_f), InputError);
}

TEST(Policy, AcceptanceProbability) {
  EXPECT_EQ(acceptance_prob(-50.0, true), 1.0);
  EXPECT_EQ(acceptance_prob(0.0, false), 0.5);
  EXPECT_NEAR(acceptance_prob(2.0, false), 0.880797, 1e-5);
}

TEST(Policy, DecideThresholdIsStrict) {
  Rng rng(1);
  const DecisionRule thr{DecisionMode::threshold, 0.6};
  EXPECT_EQ(decide(0.6, thr, rng), 0);
  EXPECT_EQ(decide(0.7, thr, rng), 1);
  EXPECT_EQ(decide(1.0, thr, rng), 1);
  const DecisionRule smp{DecisionMode::sample, 0.6};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(decide(1.0, smp, rng), 1);
  EXPECT_THROW(decide(1.5, thr, rng), InputError);
}

TEST(Policy, SampledDecisionsFollowProbability) {
  Rng rng(9);
  const DecisionRule smp{DecisionMode::sample, 0.6};
  int ones = 0;
  for (int i = 0; i < 20000; ++i) ones += decide(0.3, smp, rng);
  EXPECT_NEAR(ones / 20000.0, 0.3, 0.015);
}

TEST(RoundLength, Examples) {
  EXPECT_EQ(cospec_round_length(Flags{1, 0, 0, 1}, Flags{1, 1, 0, 1}), 3u);
  EXPECT_EQ(cospec_round_length(Flags{0, 0, 1}, Flags{1, 1, 1}), 4u);
  EXPECT_THROW(cospec_round_length(Flags{1, 0}, Flags{0, 0}), ContractError);
}

TEST(RoundLength, ExhaustiveAgainstBruteForce) {
  for (std::size_t k = 1; k <= 8; ++k) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < k; ++i) combos *= 3;
    for (std::size_t c = 0; c < combos; ++c) {
      Flags d(k);
      Flags a(k);
      std::size_t rest = c;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t v = rest % 3;
        rest /= 3;
        d[i] = v == 0;
        a[i] = v != 2;
      }
      ASSERT_EQ(cospec_round_length(d, a), brute_cospec_length(d, a));
    }
    for (unsigned bits = 0; bits < (1u << k); ++bits) {
      Flags d(k);
      Flags a(k);
      for (std::size_t i = 0; i < k; ++i) {
        d[i] = (bits >> i) & 1u;
        a[i] = d[i];
      }
      ASSERT_EQ(cospec_round_length(d, a), strict_round_length(d));
    }
  }
}

TEST(RunCospec, AlwaysRejectReducesToVanilla) {
  const Experts& e = experts();
  AlwaysRejectPolicy rej;
  for (std::size_t k : {2u, 5u, 25u}) {
    CospecSettings s;
    s.k = k;
    for (const TaskInstance& t : make_chain_suite(31, 60, 4)) {
      Rng rng(0);
      const Rollout ro = run_cospec(e.draft, e.target, rej, t, s, rng);
      const SpdRun v = run_vanilla_spd(e.draft, e.target, t, k, DecodeConfig{});
      ASSERT_EQ(ro.output, v.output);
      EXPECT_EQ(ro.stats.round_lengths, v.stats.round_lengths);
    }
  }
}

TEST(RunCospec, AlwaysAcceptInterleavesDraftAndBonus) {
  const Experts& e = experts();
  AlwaysAcceptPolicy acc;
  const std::size_t k = 3;
  CospecSettings s;
  s.k = k;
  for (const TaskInstance& t : make_chain_suite(32, 60, 4)) {
    Rng rng(0);
    const Rollout ro = run_cospec(e.draft, e.target, acc, t, s, rng);
    // Independent simulation: K greedy draft tokens, then one greedy target token.
    TokenSeq ctx = t.prompt;
    TokenSeq expect;
    const Token eos = e.target.vocab().eos;
    bool done = false;
    while (!done) {
      for (std::size_t i = 0; i <= k && !done; ++i) {
        const TabularModel& m = i < k ? e.draft : e.target;
        const Token tok = argmax_lowest(m.next_distribution(ctx));
        ctx.push_back(tok);
        expect.push_back(tok);
        done = tok == eos || expect.size() >= t.max_length;
      }
    }
    ASSERT_EQ(ro.output, expect);
  }
}

TEST(RunCospec, ForcedAcceptanceAndRecordShape) {
  const Experts& e = experts();
  const LearnedPolicy pol(PolicyParams{std::vector<double>(kFeatureCount, 0.1), -0.2});
  CospecSettings s;
  s.k = 6;
  s.temperature = Temperature::one;
  s.rule.mode = DecisionMode::sample;
  Rng rng(4);
  for (const TaskInstance& t : make_chain_suite(33, 80, 4)) {
    const Rollout ro = run_cospec(e.draft, e.target, pol, t, s, rng);
    std::size_t total = 0;
    std::size_t arb = 0;
    for (const RoundRecord& r : ro.rounds) {
      ASSERT_TRUE(r.actions.has_value());
      for (std::size_t i = 0; i < s.k; ++i) {
        if (r.delta[i]) {
          EXPECT_EQ((*r.actions)[i], 1);
          EXPECT_EQ(r.probs[i], 1.0);
        }
      }
      EXPECT_LE(r.s, cospec_round_length(r.delta, *r.actions));
      total += r.s;
      bool any_mismatch = false;
      for (std::size_t i = 0; i < s.k; ++i) any_mismatch |= !r.delta[i] && !std::isnan(r.probs[i]);
      arb += any_mismatch;
    }
    EXPECT_EQ(total, ro.output.size());
    EXPECT_EQ(ro.stats.arbitrator_calls, arb);
    EXPECT_EQ(ro.stats.target_calls, ro.rounds.size());
    for (const Decision& d : ro.decisions) {
      EXPECT_GT(d.taken_prob, 0.0);
      EXPECT_EQ(ro.rounds[d.round].delta[d.position], 0);
    }
  }
}

TEST(RunCospec, RaisingLambdaNeverLengthensARound) {
  const Experts& e = experts();
  PolicyParams p = PolicyParams::zeros();
  p.weights[0] = 0.4;
  p.weights[3] = -0.2;
  p.bias = 3.0;
  const LearnedPolicy pol(p);
  for (const TaskInstance& t : make_chain_suite(34, 60, 4)) {
    CospecSettings lo;
    lo.rule.lambda = 0.4;
    Rng rng(0);
    const Rollout ro = run_cospec(e.draft, e.target, pol, t, lo, rng);
    for (const RoundRecord& rec : ro.rounds) {
      std::size_t prev = std::numeric_limits<std::size_t>::max();
      for (double lambda : {0.4, 0.6, 0.8}) {
        CospecSettings s = lo;
        s.rule.lambda = lambda;
        const TokenSeq prefix(ro.output.begin(), ro.output.begin() + static_cast<std::ptrdiff_t>(rec.prefix_len));
        CospecState st = start_cospec(t, s, prefix, e.target.vocab().eos);
        close_round(e.draft, e.target, pol, t, s, st, DraftedRound{rec.draft, rec.verify, rec.delta}, rng);
        const std::size_t len = st.rollout.rounds.back().s;
        EXPECT_LE(len, prev);
        prev = len;
      }
    }
  }
}

TEST(OraclePolicy, TiesAcceptAndDecisionsFollowUtilities) {
  const Experts& e = experts();
  auto rej = std::make_shared<AlwaysRejectPolicy>();
  const OraclePolicy oracle(rej, UtilityEstimator{});
  CospecSettings s;
  std::size_t checked = 0;
  for (const TaskInstance& t : make_chain_suite(35, 80, 4)) {
    Rng rng(0);
    const Rollout ro = run_cospec(e.draft, e.target, oracle, t, s, rng);
    for (const RoundRecord& rec : ro.rounds) {
      for (std::size_t i = 0; i < s.k; ++i) {
        if (rec.delta[i] || std::isnan(rec.probs[i])) continue;
        MismatchState m;
        m.task = t;
        m.prefix.assign(ro.output.begin(), ro.output.begin() + static_cast<std::ptrdiff_t>(rec.prefix_len));
        m.position = i;
        m.block = rec.draft;
        m.verification = rec.verify;
        m.delta = rec.delta;
        const BranchUtilities u = branch_utilities(m, e.draft, e.target, *rej, s, UtilityEstimator{});
        EXPECT_EQ(rec.probs[i], u.u_draft >= u.u_target ? 1.0 : 0.0);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(OraclePolicy, NeverScoresBelowTargetOnEnumeratedSuite) {
  const Experts& e = experts();
  const OraclePolicy oracle(std::make_shared<AlwaysRejectPolicy>(), UtilityEstimator{});
  CospecSettings s;
  for (const TaskInstance& t : make_chain_suite(36, 150, 4)) {
    Rng rng(0);
    const int target_score = score(t, generate_autoregressive(e.target, t, DecodeConfig{}).tokens, e.target.vocab());
    EXPECT_GE(run_cospec(e.draft, e.target, oracle, t, s, rng).correct, target_score);
  }
}

TEST(PolicyIo, RoundTripAndValidation) {
  PolicyParams p = PolicyParams::zeros();
  for (std::size_t i = 0; i < kFeatureCount; ++i) p.weights[i] = 0.1 * static_cast<double>(i) - 0.37;
  p.bias = -1.25;
  std::stringstream ss;
  write_policy(ss, p, PolicyMetadata{"sft", "abc", 7});
  const PolicyFile f = read_policy(ss, "p.json");
  EXPECT_EQ(f.params, p);
  EXPECT_EQ(f.meta.stage, "sft");
  EXPECT_EQ(f.meta.seed, 7u);

  std::stringstream wrong(R"({"version":1,"feature_names":["a"],"weights":[1],"bias":0})");
  EXPECT_THROW(read_policy(wrong, "w.json"), InputError);
}
