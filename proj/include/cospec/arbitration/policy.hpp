// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/input.hpp"
#include "cospec/common.hpp"
#include "cospec/lm/decode.hpp"
#include "cospec/lm/task.hpp"
#include "cospec/spd/types.hpp"

namespace cospec {

/// Linear arbitration head: z = w . features + b.
struct PolicyParams {
  std::vector<double> weights;
  double bias = 0.0;

  static PolicyParams zeros(std::size_t dim = kFeatureCount) { return PolicyParams{std::vector<double>(dim, 0.0), 0.0}; }

  /// Effectively never accepts a mismatch (sigma(-10) ~ 4.5e-5).
  static PolicyParams reject_all(double bias = -10.0) {
    PolicyParams p = zeros();
    p.bias = bias;
    return p;
  }

  std::size_t dim() const { return weights.size(); }

  void validate() const {
    for (double w : weights) {
      if (!std::isfinite(w)) throw InputError("policy weight is not finite");
    }
    if (!std::isfinite(bias)) throw InputError("policy bias is not finite");
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

inline double policy_logit(const PolicyParams& params, std::span<const double> features) {
  if (features.size() != params.weights.size()) {
    throw InputError("feature dimension " + std::to_string(features.size()) + " does not match policy dimension " +
                     std::to_string(params.weights.size()));
  }
  double z = params.bias;
  for (std::size_t j = 0; j < features.size(); ++j) z += params.weights[j] * features[j];
  return z;
}

/// pi(a=1): matched positions are forced (logit +inf), mismatches get sigma(z).
inline double acceptance_prob(double z, bool matched) { return matched ? 1.0 : sigmoid(z); }

enum class DecisionMode { threshold, sample };

struct DecisionRule {
  DecisionMode mode = DecisionMode::threshold;
  double lambda = 0.6;
};

/// Threshold mode accepts iff prob > lambda (strict); sample mode draws Bernoulli(prob).
inline int decide(double prob, const DecisionRule& rule, Rng& rng) {
  if (!(prob >= 0.0 && prob <= 1.0)) {
    throw InputError("acceptance probability outside [0, 1]");
  }
  if (rule.mode == DecisionMode::threshold) {
    return prob > rule.lambda ? 1 : 0;
  }
  return uniform01(rng) < prob ? 1 : 0;
}

/// CoSpec round length: first rejected mismatch (1-based) or K+1.
inline std::size_t cospec_round_length(std::span<const std::uint8_t> delta, std::span<const std::uint8_t> actions) {
  if (delta.size() != actions.size()) {
    throw InputError("match vector and action vector differ in length");
  }
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (delta[i] && !actions[i]) {
      throw ContractError("matched position " + std::to_string(i) + " was rejected");
    }
  }
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!delta[i] && !actions[i]) return i + 1;
  }
  return delta.size() + 1;
}

struct CospecSettings {
  std::size_t k = 25;
  Temperature temperature = Temperature::zero;
  DecisionRule rule{};
  std::size_t max_length = 4096;
};

/// Everything an arbitration policy may look at for one round.
struct RoundView {
  const TaskInstance& task;
  const TabularModel& draft;
  const TabularModel& target;
  const CospecSettings& settings;
  /// Prompt plus verified completion prefix.
  std::span<const Token> context;
  std::size_t prefix_len;
  std::size_t round_index;
  const DraftBlock& block;
  const Verification& verification;
  const Flags& delta;
  const ArbitrationInput& input;
};

class ArbitrationPolicy {
 public:
  virtual ~ArbitrationPolicy() = default;
  virtual std::string name() const = 0;
  /// pi(a=1 | q) at mismatch position i.
  virtual double accept_prob(const RoundView& view, std::size_t i, std::span<const double> features) const = 0;
  /// True when the probability is a pure function of the round.
  virtual bool deterministic() const { return true; }
};

class AlwaysRejectPolicy final : public ArbitrationPolicy {
 public:
  std::string name() const override { return "always-reject"; }
  double accept_prob(const RoundView&, std::size_t, std::span<const double>) const override { return 0.0; }
};

class AlwaysAcceptPolicy final : public ArbitrationPolicy {
 public:
  std::string name() const override { return "always-accept"; }
  double accept_prob(const RoundView&, std::size_t, std::span<const double>) const override { return 1.0; }
};

class LearnedPolicy final : public ArbitrationPolicy {
 public:
  explicit LearnedPolicy(PolicyParams params) : params_(std::move(params)) { params_.validate(); }

  std::string name() const override { return "learned"; }
  double accept_prob(const RoundView&, std::size_t, std::span<const double> features) const override {
    return sigmoid(policy_logit(params_, features));
  }
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

}  // namespace cospec
