// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"
#include "cospec/lm/suite_io.hpp"
#include "cospec/rl/credit.hpp"
#include "cospec/rl/loss.hpp"
#include "cospec/rl/optimizer.hpp"
#include "cospec/spd/stats.hpp"

namespace cospec {

struct TrainConfig {
  std::size_t group_size = 12;
  std::size_t prompts_per_update = 16;
  std::size_t updates = 200;
  std::size_t epochs = 4;
  double lr = 5e-5;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  PpoConfig ppo{};

  void validate() const {
    if (group_size < 2) throw ConfigError("train.group_size must be >= 2");
    if (prompts_per_update < 1) throw ConfigError("train.prompts_per_update must be >= 1");
    if (!(ppo.clip > 0.0 && ppo.clip < 1.0)) throw ConfigError("train.clip must lie in (0, 1)");
    if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
    if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  }
};

struct UpdateLog {
  std::size_t update = 0;
  double mean_J = 0.0;
  double mean_score = 0.0;
  double mean_tau = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
};

struct RlResult {
  PolicyParams params;
  std::vector<UpdateLog> log;
};

using RolloutSink = std::function<void(std::size_t update, const Rollout&)>;

/// Scored group of M rollouts for one prompt, turned into clipped-objective samples.
inline std::vector<PpoSample> group_samples(std::span<const Rollout> group, const RewardConfig& reward,
                                            std::vector<double>* returns_out = nullptr) {
  std::vector<double> returns;
  std::vector<int> correct;
  for (const Rollout& ro : group) {
    returns.push_back(rollout_return(ro, reward));
    correct.push_back(ro.correct);
  }
  if (returns_out) returns_out->insert(returns_out->end(), returns.begin(), returns.end());

  const GroupType type = group_type(correct);
  if (type == GroupType::all_correct) {
    const bool flat = std::all_of(returns.begin(), returns.end(), [&](double j) { return j == returns.front(); });
    if (flat) return {};
  }
  const std::vector<double> adv = rollout_advantages(returns, correct, reward);

  std::vector<PpoSample> out;
  for (std::size_t m = 0; m < group.size(); ++m) {
    const Rollout& ro = group[m];
    const DecisionCredit credit = allocate_advantages(ro, adv[m], reward);
    for (const Decision& d : ro.decisions) {
      if (!credit.effective.at(d.round).at(d.position)) {
        throw ContractError("sampled decision lies outside its round's effective set");
      }
      out.push_back(PpoSample{d.features, d.action, d.taken_prob, credit.advantage[d.round][d.position]});
    }
  }
  return out;
}

/// Group-relative clipped policy optimization of the arbitration head.
/// Rollouts sample tokens at T=1 and sample actions from the current policy.
inline RlResult train_rl(const TabularModel& draft, const TabularModel& target, std::span<const TaskInstance> suite,
                         const PolicyParams& init, const PolicyParams& reference, const CospecSettings& settings,
                         const RewardConfig& reward, const TrainConfig& cfg, std::uint64_t seed,
                         const RolloutSink& sink = {}) {
  reward.validate();
  cfg.validate();
  if (suite.empty()) {
    throw TrainingError("RL needs a nonempty suite");
  }
  CospecSettings rollout_settings = settings;
  rollout_settings.temperature = Temperature::one;
  rollout_settings.rule.mode = DecisionMode::sample;

  RlResult res;
  res.params = init;
  AdamW opt(init.dim(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  std::vector<std::size_t> order(suite.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::size_t pass = 0;

  for (std::size_t u = 0; u < cfg.updates; ++u) {
    const LearnedPolicy snapshot(res.params);
    std::vector<PpoSample> batch;
    std::vector<double> returns;
    RunStats stats;
    std::size_t solved = 0;
    std::size_t rollouts = 0;

    for (std::size_t p = 0; p < cfg.prompts_per_update; ++p) {
      if (cursor == order.size()) {
        Rng shuffle(derive_seed({seed, hash_name("prompt-order"), pass++}));
        std::shuffle(order.begin(), order.end(), shuffle);
        cursor = 0;
      }
      const TaskInstance& task = suite[order[cursor++]];
      std::vector<Rollout> group;
      group.reserve(cfg.group_size);
      for (std::size_t m = 0; m < cfg.group_size; ++m) {
        Rng rng(derive_seed({seed, hash_name("rollout"), u, p, m, task.seed}));
        group.push_back(run_cospec(draft, target, snapshot, task, rollout_settings, rng));
        stats += group.back().stats;
        solved += group.back().correct ? 1 : 0;
        ++rollouts;
        if (sink) sink(u, group.back());
      }
      std::vector<PpoSample> samples = group_samples(group, reward, &returns);
      batch.insert(batch.end(), std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.end()));
    }

    UpdateLog log;
    log.update = u;
    log.mean_J = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    log.mean_score = static_cast<double>(solved) / static_cast<double>(rollouts);
    log.mean_tau = stats.rounds ? mean_accepted_length(stats) : 0.0;

    for (std::size_t e = 0; e < cfg.epochs && !batch.empty(); ++e) {
      PpoLoss l = ppo_loss(res.params, reference, batch, cfg.ppo);
      const double norm = clip_grad_norm(l.grad, cfg.grad_clip);
      if (e == 0) {
        log.loss = l.loss;
        log.grad_norm = norm;
        log.entropy = l.entropy;
        log.kl = l.kl;
      }
      opt.step(res.params, l.grad);
    }
    res.log.push_back(log);
  }
  return res;
}

}  // namespace cospec
