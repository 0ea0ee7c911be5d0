// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"
#include "cospec/rl/loss.hpp"

namespace cospec {

/// Rescales `g` so its norm is at most `cap`; returns the norm before clipping.
inline double clip_grad_norm(PolicyGrad& g, double cap) {
  const double n = g.norm();
  if (cap > 0.0 && n > cap) g.scale(cap / n);
  return n;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled weight decay; the bias is not decayed.
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(std::size_t dim, AdamConfig cfg) : cfg_(cfg), m_(dim + 1, 0.0), v_(dim + 1, 0.0) {
    if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  }

  void step(PolicyParams& params, const PolicyGrad& grad) {
    const std::size_t dim = params.dim();
    if (grad.weights.size() != dim || m_.size() != dim + 1) {
      throw InputError("gradient dimension does not match the optimizer");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](double& x, double g, std::size_t slot, bool decay) {
      m_[slot] = cfg_.beta1 * m_[slot] + (1.0 - cfg_.beta1) * g;
      v_[slot] = cfg_.beta2 * v_[slot] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[slot] / c1;
      const double vhat = v_[slot] / c2;
      if (decay) x -= cfg_.lr * cfg_.weight_decay * x;
      x -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    };
    for (std::size_t j = 0; j < dim; ++j) update(params.weights[j], grad.weights[j], j, true);
    update(params.bias, grad.bias, dim, false);
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace cospec
