// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/input.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"
#include "cospec/diagnostics/branch.hpp"
#include "cospec/lm/suite_io.hpp"
#include "cospec/rl/loss.hpp"
#include "cospec/rl/optimizer.hpp"
#include "cospec/spd/engine.hpp"

namespace cospec {

inline double judge_label(double u_draft, double u_target, double sharpness) {
  return sigmoid(sharpness * (u_draft - u_target));
}

/// Soft labels sigma(sharpness * (u_D - u_T)) from counterfactual utilities.
inline std::vector<double> judge_labels_oracle(std::span<const MismatchState> states, const TabularModel& draft,
                                               const TabularModel& target, const ArbitrationPolicy& reference,
                                               const CospecSettings& settings, const UtilityEstimator& est,
                                               double sharpness) {
  std::vector<double> labels;
  labels.reserve(states.size());
  for (const MismatchState& m : states) {
    const BranchUtilities u = branch_utilities(m, draft, target, reference, settings, est);
    labels.push_back(judge_label(u.u_draft, u.u_target, sharpness));
  }
  return labels;
}

/// Every reachable mismatch of every vanilla SPD round on the suite.
inline std::vector<MismatchState> collect_sft_states(const TabularModel& draft, const TabularModel& target,
                                                     std::span<const TaskInstance> suite,
                                                     const CospecSettings& settings) {
  DecodeConfig dc;
  dc.temperature = Temperature::zero;
  dc.max_length = settings.max_length;
  std::vector<MismatchState> out;
  for (const TaskInstance& task : suite) {
    const SpdRun run = run_vanilla_spd(draft, target, task, settings.k, dc);
    const std::size_t cap = generation_cap(task, dc);
    for (const RoundRecord& rec : run.rounds) {
      const std::size_t reach = reachable_positions(rec.draft, target.vocab().eos, rec.prefix_len, cap);
      for (std::size_t i = 0; i < reach; ++i) {
        if (rec.delta[i]) continue;
        MismatchState m;
        m.task = task;
        m.prefix.assign(run.output.begin(), run.output.begin() + static_cast<std::ptrdiff_t>(rec.prefix_len));
        m.round = rec.index;
        m.position = i;
        m.block = rec.draft;
        m.verification = rec.verify;
        m.delta = rec.delta;
        out.push_back(std::move(m));
      }
    }
  }
  return out;
}

inline FeatureVector state_features(const MismatchState& m, const Vocabulary& vocab) {
  TokenSeq context = m.task.prompt;
  context.insert(context.end(), m.prefix.begin(), m.prefix.end());
  const ArbitrationInput input = build_arbitration_input(context, m.block, m.verification, vocab);
  return extract_features(input, m.block, m.verification, m.position);
}

struct SftConfig {
  std::size_t steps = 300;
  double lr = 0.05;
  double weight_decay = 0.1;
  double sharpness = 5.0;
};

struct SftResult {
  PolicyParams params;
  /// Mean per-example loss before each step, then after the last.
  std::vector<double> losses;
  std::size_t examples = 0;
};

/// Full-batch AdamW on the mean BCE, starting from zero weights.
inline SftResult fit_sft(std::span<const SftExample> examples, const SftConfig& cfg) {
  if (examples.empty()) {
    throw TrainingError("no labeled mismatches to train on");
  }
  SftResult res;
  res.params = PolicyParams::zeros(examples.front().features.size());
  res.examples = examples.size();
  AdamW opt(res.params.dim(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const double n = static_cast<double>(examples.size());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    LossValue lv = sft_loss(res.params, examples);
    res.losses.push_back(lv.loss / n);
    lv.grad.scale(1.0 / n);
    opt.step(res.params, lv.grad);
  }
  res.losses.push_back(sft_loss(res.params, examples).loss / n);
  return res;
}

/// Vanilla SPD traces -> oracle-judge labels (always-reject continuation) -> BCE fit.
inline SftResult train_sft(const TabularModel& draft, const TabularModel& target, std::span<const TaskInstance> suite,
                           const CospecSettings& settings, const SftConfig& cfg) {
  if (suite.empty()) {
    throw TrainingError("supervised warm-up needs a nonempty suite");
  }
  CospecSettings judge_settings = settings;
  judge_settings.temperature = Temperature::zero;
  judge_settings.rule.mode = DecisionMode::threshold;
  const std::vector<MismatchState> states = collect_sft_states(draft, target, suite, judge_settings);
  if (states.empty()) {
    throw TrainingError("vanilla SPD produced no mismatches on the suite; nothing to learn");
  }
  AlwaysRejectPolicy reference;
  const std::vector<double> labels =
      judge_labels_oracle(states, draft, target, reference, judge_settings, UtilityEstimator{}, cfg.sharpness);
  std::vector<SftExample> examples;
  examples.reserve(states.size());
  for (std::size_t j = 0; j < states.size(); ++j) {
    examples.push_back(SftExample{state_features(states[j], target.vocab()), labels[j]});
  }
  return fit_sft(examples, cfg);
}

}  // namespace cospec
