// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cospec/lm/chain_sum.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/lm/suite_io.hpp"
#include "cospec/spd/engine.hpp"
#include "cospec/spd/round.hpp"
#include "cospec/spd/stats.hpp"
#include "cospec/spd/trace_io.hpp"

using namespace cospec;

namespace {

Flags flags_from_bits(unsigned bits, std::size_t k) {
  Flags d(k);
  for (std::size_t i = 0; i < k; ++i) d[i] = (bits >> i) & 1u;
  return d;
}

// Reference scan written straight from the definition.
std::size_t brute_strict_length(const Flags& d) {
  std::size_t s = d.size() + 1;
  for (std::size_t i = d.size(); i-- > 0;) {
    if (!d[i]) s = i + 1;
  }
  return s;
}

TabularModel point_mass_model(const Vocabulary& v, Token t, const std::string& id) {
  Distribution row(v.size, 0.0);
  row[static_cast<std::size_t>(t)] = 1.0;
  return TabularModel(id, v, 1, row);
}

}  // namespace

TEST(Round, ProposeBlockFollowsGreedyContinuation) {
  const ChainFamily fam{3, 0};
  const TabularModel m = make_noisy_expert(fam, 1.0, 1);
  const TaskInstance t = make_chain_task(4, 3);
  Rng rng(0);
  const DraftBlock b = propose_block(m, t.prompt, 3, Temperature::zero, rng);
  EXPECT_EQ(b.tokens, TokenSeq(t.answer.begin(), t.answer.begin() + 3));
  ASSERT_EQ(b.probs.size(), 3u);
  const DraftBlock one = propose_block(m, t.prompt, 1, Temperature::zero, rng);
  EXPECT_EQ(one.tokens, TokenSeq{t.answer[0]});
  EXPECT_THROW(propose_block(m, t.prompt, 0, Temperature::zero, rng), InputError);
}

TEST(Round, SeededSampledBlockIsReproducible) {
  const ChainFamily fam{3, 0};
  const TabularModel m = make_noisy_expert(fam, 0.6, 1);
  const TaskInstance t = make_chain_task(4, 3);
  Rng a(77);
  Rng b(77);
  EXPECT_EQ(propose_block(m, t.prompt, 6, Temperature::one, a).tokens,
            propose_block(m, t.prompt, 6, Temperature::one, b).tokens);
}

TEST(Round, VerificationIsTeacherForced) {
  const ChainFamily fam{3, 0};
  const TabularModel target = make_noisy_expert(fam, 0.9, 1);
  const TaskInstance t = make_chain_task(8, 3);
  DraftBlock block;
  block.tokens = {t.answer[0], static_cast<Token>((t.answer[1] + 1) % 10), t.answer[2]};
  block.probs.assign(3, Distribution(13, 1.0 / 13));
  Rng rng(0);
  const Verification v = verify_block(target, t.prompt, block, Temperature::zero, rng);
  ASSERT_EQ(v.tokens.size(), 4u);
  TokenSeq ctx = t.prompt;
  for (std::size_t i = 0; i <= 3; ++i) {
    EXPECT_EQ(v.tokens[i], argmax_lowest(target.next_distribution(ctx)));
    if (i < 3) {
      EXPECT_DOUBLE_EQ(v.draft_log_probs[i], target_log_prob(target, ctx, block.tokens[i]));
      ctx.push_back(block.tokens[i]);
    }
  }
}

TEST(Round, MatchVectorExamples) {
  EXPECT_EQ(match_vector(TokenSeq{5, 7, 9}, TokenSeq{5, 8, 9, 2}), (Flags{1, 0, 1}));
  EXPECT_EQ(match_vector(TokenSeq{1, 2}, TokenSeq{1, 2, 3}), (Flags{1, 1}));
  EXPECT_EQ(match_vector(TokenSeq{1, 2}, TokenSeq{3, 4, 5}), (Flags{0, 0}));
  EXPECT_THROW(match_vector(TokenSeq{1, 2}, TokenSeq{1, 2}), InputError);
}

TEST(Round, StrictLengthExamples) {
  EXPECT_EQ(strict_round_length(Flags{1, 1, 0, 1}), 3u);
  EXPECT_EQ(strict_round_length(Flags{1, 1, 1, 1}), 5u);
  EXPECT_EQ(strict_round_length(Flags{0, 1, 1}), 1u);
}

TEST(Round, StrictLengthMatchesBruteForceUpToTwelve) {
  for (std::size_t k = 1; k <= 12; ++k) {
    for (unsigned bits = 0; bits < (1u << k); ++bits) {
      const Flags d = flags_from_bits(bits, k);
      ASSERT_EQ(strict_round_length(d), brute_strict_length(d));
    }
  }
}

TEST(Round, EmitStopsAtEosAndCap) {
  TokenSeq out;
  const Emission e = emit_tokens(out, TokenSeq{1, 2, 9, 3}, 9, 100);
  EXPECT_EQ(e.count, 3u);
  EXPECT_TRUE(e.finished);
  TokenSeq out2 = {0, 0};
  const Emission f = emit_tokens(out2, TokenSeq{1, 2, 3}, 9, 4);
  EXPECT_EQ(f.count, 2u);
  EXPECT_TRUE(f.finished);
}

TEST(VanillaSpd, LosslessOnNoisyChainExperts) {
  const ChainFamily fam{4, 0};
  const TabularModel target = make_noisy_expert(fam, 0.95, 1);
  const TabularModel draft = make_noisy_expert(fam, 0.8, 2);
  for (const TaskInstance& t : make_chain_suite(21, 100, 4)) {
    for (std::size_t k : {1u, 3u, 25u}) {
      const SpdRun run = run_vanilla_spd(draft, target, t, k, DecodeConfig{});
      EXPECT_EQ(run.output, generate_autoregressive(target, t, DecodeConfig{}).tokens);
      EXPECT_EQ(run.stats.target_calls, run.stats.rounds);
      EXPECT_EQ(run.stats.draft_calls, run.stats.rounds * k);
      std::size_t total = 0;
      for (const RoundRecord& r : run.rounds) {
        total += r.s;
        EXPECT_GE(r.s, 1u);
        EXPECT_LE(r.s, k + 1);
        EXPECT_FALSE(r.actions.has_value());
      }
      EXPECT_EQ(total, run.stats.emitted);
      EXPECT_EQ(run.stats.emitted, run.output.size());
    }
  }
}

TEST(VanillaSpd, IdenticalModelsEmitFullBlocks) {
  const Vocabulary v = Vocabulary::with_size(4);
  const TabularModel m("same", v, 1);
  TaskInstance t;
  t.prompt = {0};
  const std::size_t k = 4;
  t.max_length = 3 * (k + 1);
  const SpdRun run = run_vanilla_spd(m, m, t, k, DecodeConfig{});
  EXPECT_EQ(run.stats.rounds, 3u);
  for (std::size_t s : run.stats.round_lengths) EXPECT_EQ(s, k + 1);
  EXPECT_DOUBLE_EQ(mean_accepted_length(run.stats), static_cast<double>(k + 1));
}

TEST(VanillaSpd, GarbageDraftEmitsOneTokenPerRound) {
  const ChainFamily fam{3, 0};
  const TabularModel target = make_noisy_expert(fam, 1.0, 1);
  const TabularModel draft = point_mass_model(target.vocab(), target.vocab().sep, "garbage");
  const TaskInstance t = make_chain_task(2, 3);
  const SpdRun run = run_vanilla_spd(draft, target, t, 5, DecodeConfig{});
  EXPECT_EQ(run.output, t.answer);
  for (std::size_t s : run.stats.round_lengths) EXPECT_EQ(s, 1u);
}

TEST(VanillaSpd, RejectsUnitTemperature) {
  const ChainFamily fam{2, 0};
  const TabularModel m = make_noisy_expert(fam, 1.0, 1);
  DecodeConfig c;
  c.temperature = Temperature::one;
  EXPECT_THROW(run_vanilla_spd(m, m, make_chain_task(1, 2), 3, c), InputError);
}

TEST(SpeculativeSampling, TwoTokenMarginalIsExact) {
  const Distribution pd = {0.5, 0.5, 0.0, 0.0};
  const Distribution pt = {0.9, 0.1, 0.0, 0.0};
  const Distribution m = emission_marginal(pd, pt);
  // Hand evaluation: accept a always (0.5); b accepted w.p. 0.2, else resample a.
  EXPECT_DOUBLE_EQ(m[0], 0.5 * 1.0 + 0.5 * 0.8);
  EXPECT_DOUBLE_EQ(m[1], 0.5 * 0.2);
  EXPECT_EQ(m[2], 0.0);
}

TEST(SpeculativeSampling, EqualRowsAlwaysAccept) {
  const Distribution p = {0.3, 0.3, 0.4, 0.0};
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Token d = sample_index(p, rng);
    EXPECT_TRUE(speculative_step(d, p, p, rng).accepted);
  }
}

TEST(SpeculativeSampling, EmpiricalMarginalMatchesTarget) {
  Rng rng(11);
  Distribution pd(10);
  Distribution pt(10);
  double sd = 0.0;
  double st = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    pd[i] = 1.0 + static_cast<double>(i % 3);
    pt[i] = 1.0 + static_cast<double>((7 * i) % 5);
    sd += pd[i];
    st += pt[i];
  }
  for (std::size_t i = 0; i < 10; ++i) {
    pd[i] /= sd;
    pt[i] /= st;
  }
  std::vector<double> counts(10, 0.0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Token d = sample_index(pd, rng);
    counts[static_cast<std::size_t>(speculative_step(d, pd, pt, rng).token)] += 1.0;
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < 10; ++i) tv += std::abs(counts[i] / n - pt[i]);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(SpeculativeSampling, ZeroDraftMassIsAnInvariantViolation) {
  EXPECT_THROW(acceptance_ratio(0.5, 0.0), ContractError);
}

TEST(SpeculativeSampling, RunAccountingAndRecords) {
  const ChainFamily fam{4, 0};
  const TabularModel target = make_noisy_expert(fam, 0.9, 1);
  const TabularModel draft = make_noisy_expert(fam, 0.7, 2);
  DecodeConfig c;
  c.temperature = Temperature::one;
  Rng rng(5);
  for (const TaskInstance& t : make_chain_suite(3, 50, 4)) {
    const SpdRun run = run_speculative_sampling(draft, target, t, 4, c, rng);
    EXPECT_EQ(run.stats.target_calls, run.stats.rounds);
    std::size_t total = 0;
    for (const RoundRecord& r : run.rounds) total += r.s;
    EXPECT_EQ(total, run.output.size());
    EXPECT_EQ(run.output.back(), target.vocab().eos);
  }
}

TEST(Stats, MeanAcceptedLength) {
  RunStats s;
  for (std::size_t x : {3u, 5u, 1u}) s.add_round(x);
  EXPECT_DOUBLE_EQ(mean_accepted_length(s), 3.0);
  RunStats one;
  one.add_round(26);
  EXPECT_DOUBLE_EQ(mean_accepted_length(one), 26.0);
  EXPECT_THROW(mean_accepted_length(RunStats{}), StatisticError);
}

TEST(Stats, CostModelSpeedup) {
  RunStats s;
  s.emitted = 100;
  s.target_calls = 10;
  s.draft_calls = 250;
  s.arbitrator_calls = 10;
  s.rounds = 10;
  EXPECT_NEAR(cost_model_speedup(s, CostWeights{0.1, 0.05}), 100.0 / 35.5, 1e-12);
  EXPECT_DOUBLE_EQ(cost_model_speedup(s, CostWeights{0.0, 0.0}), 10.0);
  EXPECT_THROW(cost_model_speedup(RunStats{}, CostWeights{}), InputError);
  EXPECT_THROW(cost_model_speedup(s, CostWeights{-1.0, 0.0}), InputError);
}

TEST(Stats, TargetOnlySpeedIsOne) {
  const ChainFamily fam{3, 0};
  const TabularModel target = make_noisy_expert(fam, 0.9, 1);
  Rng rng(0);
  RunStats pooled;
  for (const TaskInstance& t : make_chain_suite(8, 20, 3)) pooled += run_target_only(target, t, DecodeConfig{}, rng).stats;
  EXPECT_EQ(cost_model_speedup(pooled, CostWeights{}), 1.0);
}

TEST(TraceIo, FieldOrderAndRounding) {
  RoundRecord rec;
  rec.index = 2;
  rec.prefix_len = 4;
  rec.draft.tokens = {1, 2};
  rec.verify.tokens = {1, 3, 4};
  rec.delta = {1, 0};
  rec.actions = Flags{1, 0};
  rec.s = 2;
  rec.probs = {1.0, 0.1234567891234, std::nan("")};
  std::stringstream ss;
  write_trace(ss, {rec});
  const std::string line = ss.str();
  EXPECT_EQ(line,
            "{\"r\":2,\"prefix_len\":4,\"draft\":[1,2],\"verify\":[1,3,4],\"delta\":[1,0],\"actions\":[1,0],"
            "\"s\":2,\"probs\":[1.0,0.123456789,null]}\n");
  RoundRecord plain = rec;
  plain.actions.reset();
  EXPECT_TRUE(nlohmann::json::parse(round_to_json(plain).dump())["actions"].is_null());
}
