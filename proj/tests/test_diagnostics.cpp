// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "cospec/diagnostics/analysis.hpp"
#include "cospec/diagnostics/branch.hpp"
#include "cospec/lm/chain_sum.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/rl/sft.hpp"

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

// Keep the first n drafted tokens, then let the target finish greedily.
int draft_prefix_then_target(const MismatchState& m, std::size_t n, const TabularModel& target) {
  const Token eos = target.vocab().eos;
  const std::size_t cap = generation_cap(m.task, DecodeConfig{});
  TokenSeq out = m.prefix;
  bool done = false;
  for (std::size_t i = 0; i < n && !done && out.size() < cap; ++i) {
    out.push_back(m.block.tokens[i]);
    done = m.block.tokens[i] == eos;
  }
  while (!done && out.size() < cap) {
    TokenSeq ctx = m.task.prompt;
    ctx.insert(ctx.end(), out.begin(), out.end());
    const Token t = argmax_lowest(target.next_distribution(ctx));
    out.push_back(t);
    done = t == eos;
  }
  return score(m.task, out, target.vocab());
}

std::vector<MismatchState> vanilla_states(std::uint64_t suite_seed, std::size_t n) {
  const Experts& e = experts();
  return collect_sft_states(e.draft, e.target, make_chain_suite(suite_seed, n, 4), CospecSettings{});
}

}  // namespace

TEST(BranchUtilities, AlwaysRejectContinuationMatchesGreedyCompletion) {
  const Experts& e = experts();
  const AlwaysRejectPolicy rej;
  bool saw_draft_better = false;
  bool saw_both_correct = false;
  for (const MismatchState& m : vanilla_states(41, 150)) {
    std::size_t next = m.position + 1;
    while (next < m.delta.size() && m.delta[next]) ++next;
    const BranchUtilities u = branch_utilities(m, e.draft, e.target, rej, CospecSettings{}, UtilityEstimator{});
    ASSERT_TRUE(u.exact);
    ASSERT_EQ(u.u_target, draft_prefix_then_target(m, m.position, e.target));
    ASSERT_EQ(u.u_draft, draft_prefix_then_target(m, next, e.target));
    saw_draft_better |= u.u_draft == 1.0 && u.u_target == 0.0;
    saw_both_correct |= u.u_draft == 1.0 && u.u_target == 1.0;
  }
  EXPECT_TRUE(saw_draft_better);
  EXPECT_TRUE(saw_both_correct);
}

TEST(BranchUtilities, ExactEqualsMonteCarloWhenDeterministic) {
  const Experts& e = experts();
  const AlwaysRejectPolicy rej;
  const auto states = vanilla_states(42, 40);
  ASSERT_FALSE(states.empty());
  for (const MismatchState& m : states) {
    const BranchUtilities ex = branch_utilities(m, e.draft, e.target, rej, CospecSettings{}, UtilityEstimator{});
    for (std::size_t n : {1u, 5u}) {
      const BranchUtilities mc = branch_utilities(m, e.draft, e.target, rej, CospecSettings{},
                                                  UtilityEstimator{EstimatorMode::monte_carlo, n, 3});
      EXPECT_EQ(mc.u_draft, ex.u_draft);
      EXPECT_EQ(mc.u_target, ex.u_target);
    }
  }
  EXPECT_THROW(branch_utilities(states.front(), e.draft, e.target, rej, CospecSettings{},
                                UtilityEstimator{EstimatorMode::monte_carlo, 0, 0}),
               InputError);
}

TEST(BranchUtilities, ExactModeRejectsStochasticSettings) {
  const Experts& e = experts();
  const auto states = vanilla_states(43, 40);
  ASSERT_FALSE(states.empty());
  CospecSettings s;
  s.temperature = Temperature::one;
  EXPECT_THROW(branch_utilities(states.front(), e.draft, e.target, AlwaysRejectPolicy{}, s, UtilityEstimator{}),
               InputError);
  MismatchState match = states.front();
  match.delta[match.position] = 1;
  EXPECT_THROW(branch_utilities(match, e.draft, e.target, AlwaysRejectPolicy{}, CospecSettings{}, UtilityEstimator{}),
               InputError);
}

TEST(BranchUtilities, MonteCarloAtTemperatureOneIsSeeded) {
  const Experts& e = experts();
  const auto states = vanilla_states(44, 20);
  ASSERT_FALSE(states.empty());
  CospecSettings s;
  s.temperature = Temperature::one;
  s.rule.mode = DecisionMode::sample;
  const UtilityEstimator est{EstimatorMode::monte_carlo, 8, 77};
  const BranchUtilities a = branch_utilities(states.front(), e.draft, e.target, AlwaysRejectPolicy{}, s, est);
  const BranchUtilities b = branch_utilities(states.front(), e.draft, e.target, AlwaysRejectPolicy{}, s, est);
  EXPECT_EQ(a.u_draft, b.u_draft);
  EXPECT_EQ(a.u_target, b.u_target);
  EXPECT_FALSE(a.exact);
  EXPECT_GE(a.u_draft, 0.0);
  EXPECT_LE(a.u_draft, 1.0);
}

TEST(Gap, SingleStateAndOneSided) {
  const std::vector<BranchUtilities> one = {{0.8, 0.5, true, 1}};
  const GapResult g = complementarity_gap(one);
  EXPECT_NEAR(g.lhs, 0.3, 1e-15);
  EXPECT_NEAR(g.rhs, 0.3, 1e-15);
  const std::vector<BranchUtilities> worse = {{0.1, 0.5, true, 1}, {0.4, 0.4, true, 1}};
  EXPECT_EQ(complementarity_gap(worse).lhs, 0.0);
  EXPECT_EQ(complementarity_gap(worse).rhs, 0.0);
  EXPECT_THROW(complementarity_gap(std::span<const BranchUtilities>{}), InputError);
}

TEST(Gap, IdentityHoldsOnRandomUtilities) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<BranchUtilities> v;
    double pos = 0.0;
    for (int i = 0; i < 50; ++i) {
      v.push_back({u(gen), u(gen), true, 1});
      pos += std::max(0.0, v.back().u_draft - v.back().u_target);
    }
    const GapResult g = complementarity_gap(v);
    EXPECT_NEAR(g.lhs, g.rhs, 1e-12);
    EXPECT_NEAR(g.rhs, pos / 50.0, 1e-12);
  }
}

TEST(Breakdown, CategoriesAgreementAndPartition) {
  EXPECT_EQ(categorize({1, 0, true, 1}), MismatchCategory::draft_better);
  EXPECT_EQ(categorize({0, 1, true, 1}), MismatchCategory::target_better);
  EXPECT_EQ(categorize({1, 1, true, 1}), MismatchCategory::both_correct);
  EXPECT_EQ(categorize({0, 0, true, 1}), MismatchCategory::both_wrong);
  EXPECT_THROW(categorize({0.5, 0, false, 4}), InputError);
  EXPECT_TRUE(decision_agrees({1, 1, true, 1}, 0));
  EXPECT_TRUE(decision_agrees({1, 1, true, 1}, 1));
  EXPECT_FALSE(decision_agrees({0, 1, true, 1}, 1));

  std::vector<AnalyzedState> states;
  const std::vector<std::pair<double, double>> u = {{1, 0}, {1, 0}, {0, 1}, {1, 1}, {0, 0}, {1, 1}, {0, 1}};
  for (std::size_t i = 0; i < u.size(); ++i) {
    AnalyzedState a;
    a.utilities = {u[i].first, u[i].second, true, 1};
    a.action = static_cast<int>(i % 2);
    states.push_back(a);
  }
  const MismatchBreakdown b = mismatch_breakdown(states);
  ASSERT_EQ(b.rows.size(), 5u);
  EXPECT_EQ(b.rows[0].name, "all");
  double share = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 1; r < b.rows.size(); ++r) {
    share += b.rows[r].share;
    count += b.rows[r].count;
  }
  EXPECT_NEAR(share, 1.0, 1e-9);
  EXPECT_EQ(count, u.size());
  EXPECT_EQ(b.rows[1].count, 2u);
  EXPECT_EQ(b.rows[1].agreement, 0.5);
  EXPECT_EQ(b.rows[3].agreement, 1.0);
}

TEST(Breakdown, OracleAgreesAndAlwaysRejectNeverAccepts) {
  const Experts& e = experts();
  auto rej = std::make_shared<AlwaysRejectPolicy>();
  const OraclePolicy oracle(rej, UtilityEstimator{});
  const CospecSettings s;
  std::vector<AnalyzedState> by_oracle;
  std::vector<AnalyzedState> by_reject;
  for (const TaskInstance& t : make_chain_suite(45, 120, 4)) {
    Rng rng(0);
    for (auto& a : analyze_task(e.draft, e.target, oracle, *rej, t, s, UtilityEstimator{}, rng)) by_oracle.push_back(a);
    for (auto& a : analyze_task(e.draft, e.target, *rej, *rej, t, s, UtilityEstimator{}, rng)) by_reject.push_back(a);
  }
  ASSERT_FALSE(by_oracle.empty());
  const MismatchBreakdown ob = mismatch_breakdown(by_oracle);
  for (const CategoryStats& c : ob.rows) {
    if (c.count) {
      EXPECT_EQ(c.agreement, 1.0) << c.name;
    }
  }
  const MismatchBreakdown rb = mismatch_breakdown(by_reject);
  for (const CategoryStats& c : rb.rows) {
    if (c.count) {
      EXPECT_EQ(c.draft_accept_rate, 0.0) << c.name;
    }
  }
  // Categories with a strict preference pin draft_not_worse.
  EXPECT_EQ(rb.rows[1].count ? rb.rows[1].draft_not_worse : 1.0, 1.0);
  EXPECT_EQ(rb.rows[2].count ? rb.rows[2].draft_not_worse : 0.0, 0.0);
}

TEST(Recovery, ArithmeticAndEdges) {
  EXPECT_NEAR(recovery_metric(1261, 1281, 1274).value, 0.65, 1e-12);
  EXPECT_EQ(recovery_metric(10, 20, 10).value, 0.0);
  EXPECT_EQ(recovery_metric(10, 20, 20).value, 1.0);
  const Recovery d = recovery_metric(7, 7, 7);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.value, 0.0);
  EXPECT_THROW(recovery_metric(8, 7, 7), InputError);
}

TEST(Recovery, ReportNestedAndComplementary) {
  const std::vector<int> target = {1, 1, 0, 1, 0};
  const std::vector<int> nested = {1, 0, 0, 1, 0};
  const ComplementarityReport n = complementarity_report(target, nested, target);
  EXPECT_EQ(n.union_correct, n.target_correct);
  EXPECT_TRUE(n.recovery.degenerate);

  const std::vector<int> comp = {0, 1, 1, 0, 1};
  const std::vector<int> cospec = {1, 1, 1, 1, 0};
  const ComplementarityReport c = complementarity_report(target, comp, cospec);
  EXPECT_EQ(c.union_correct, 5u);
  EXPECT_EQ(c.cospec_correct, 4u);
  EXPECT_NEAR(c.recovery.value, 0.5, 1e-12);

  const std::vector<int> perfect(5, 1);
  const ComplementarityReport p = complementarity_report(perfect, perfect, perfect);
  EXPECT_TRUE(p.recovery.degenerate);
  EXPECT_EQ(p.total, 5u);

  EXPECT_THROW(complementarity_report(target, std::vector<int>{1}, target), InputError);
}

TEST(Recovery, EngineeredExpertsLeaveHeadroom) {
  const Experts& e = experts();
  std::vector<int> t;
  std::vector<int> d;
  for (const TaskInstance& task : make_chain_suite(46, 200, 4)) {
    t.push_back(score(task, generate_autoregressive(e.target, task, DecodeConfig{}).tokens, e.target.vocab()));
    d.push_back(score(task, generate_autoregressive(e.draft, task, DecodeConfig{}).tokens, e.draft.vocab()));
  }
  const ComplementarityReport r = complementarity_report(t, d, t);
  EXPECT_GT(r.union_correct, r.target_correct);
  EXPECT_EQ(r.recovery.value, 0.0);
}
