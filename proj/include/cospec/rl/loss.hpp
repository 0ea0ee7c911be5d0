// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"

namespace cospec {

/// Gradient with respect to (weights, bias).
struct PolicyGrad {
  std::vector<double> weights;
  double bias = 0.0;

  static PolicyGrad zeros(std::size_t dim) { return PolicyGrad{std::vector<double>(dim, 0.0), 0.0}; }

  double norm() const {
    double s = bias * bias;
    for (double w : weights) s += w * w;
    return std::sqrt(s);
  }

  void scale(double f) {
    for (double& w : weights) w *= f;
    bias *= f;
  }
};

inline void accumulate_grad(PolicyGrad& g, std::span<const double> features, double dz) {
  for (std::size_t j = 0; j < features.size(); ++j) g.weights[j] += dz * features[j];
  g.bias += dz;
}

inline double bernoulli_entropy_logit(double z) {
  const double p = sigmoid(z);
  return -(p * log_sigmoid(z) + (1.0 - p) * log_sigmoid(-z));
}

/// KL(Bern(sigma(z)) || Bern(sigma(z_ref))).
inline double bernoulli_kl_logit(double z, double z_ref) {
  const double p = sigmoid(z);
  return p * (log_sigmoid(z) - log_sigmoid(z_ref)) + (1.0 - p) * (log_sigmoid(-z) - log_sigmoid(-z_ref));
}

// ---------------------------------------------------------------------------
// Supervised warm-up
// ---------------------------------------------------------------------------

struct SftExample {
  FeatureVector features;
  double label = 0.0;
};

struct LossValue {
  double loss = 0.0;
  PolicyGrad grad;
};

/// Binary cross-entropy of pi(a=1|q) against soft labels, summed.
inline LossValue sft_loss(const PolicyParams& params, std::span<const SftExample> examples) {
  LossValue out{0.0, PolicyGrad::zeros(params.dim())};
  for (const SftExample& ex : examples) {
    if (!(ex.label >= 0.0 && ex.label <= 1.0)) {
      throw InputError("soft label outside [0, 1]");
    }
    const double z = policy_logit(params, ex.features);
    out.loss -= ex.label * log_sigmoid(z) + (1.0 - ex.label) * log_sigmoid(-z);
    accumulate_grad(out.grad, ex.features, sigmoid(z) - ex.label);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clipped policy objective
// ---------------------------------------------------------------------------

struct PpoConfig {
  double clip = 0.2;
  double entropy_weight = 0.01;
  double kl_weight = 0.02;
};

/// One effective decision with its rollout-time probability of the taken
/// action and its allocated advantage.
struct PpoSample {
  FeatureVector features;
  int action = 0;
  double prob_old = 0.0;
  double advantage = 0.0;
};

struct PpoLoss {
  double loss = 0.0;
  double surrogate = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  PolicyGrad grad;
};

/// -sum min(r A, clip(r) A) - beta_H mean H + beta_KL mean KL(pi || pi_ref).
inline PpoLoss ppo_loss(const PolicyParams& params, const PolicyParams& ref, std::span<const PpoSample> batch,
                        const PpoConfig& cfg) {
  PpoLoss out;
  out.grad = PolicyGrad::zeros(params.dim());
  if (batch.empty()) return out;
  const double n = static_cast<double>(batch.size());
  for (const PpoSample& s : batch) {
    if (!(s.prob_old > 0.0)) {
      throw TrainingError("corrupt rollout: taken action has zero rollout-time probability");
    }
    const double z = policy_logit(params, s.features);
    const double z_ref = policy_logit(ref, s.features);
    const double p = sigmoid(z);
    const double dp = p * (1.0 - p);
    const double pa = s.action ? p : 1.0 - p;
    const double ratio = pa / s.prob_old;
    const double dratio = (s.action ? dp : -dp) / s.prob_old;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double a = s.advantage;

    double dz = 0.0;
    if (ratio * a <= clipped * a) {
      out.surrogate += ratio * a;
      dz -= a * dratio;
    } else {
      out.surrogate += clipped * a;
    }

    const double h = bernoulli_entropy_logit(z);
    const double kl = bernoulli_kl_logit(z, z_ref);
    out.entropy += h / n;
    out.kl += kl / n;
    dz += cfg.entropy_weight * z * dp / n;
    dz += cfg.kl_weight * dp * (z - z_ref) / n;
    accumulate_grad(out.grad, s.features, dz);
  }
  out.loss = -out.surrogate - cfg.entropy_weight * out.entropy + cfg.kl_weight * out.kl;
  return out;
}

}  // namespace cospec
