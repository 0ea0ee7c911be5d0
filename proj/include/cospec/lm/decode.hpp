// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "cospec/common.hpp"
#include "cospec/lm/tabular_model.hpp"
#include "cospec/lm/task.hpp"

namespace cospec {

/// Sampling temperature; only greedy (0) and unit temperature (1) exist.
enum class Temperature { zero = 0, one = 1 };

inline Temperature temperature_from_int(long t) {
  if (t == 0) return Temperature::zero;
  if (t == 1) return Temperature::one;
  throw InputError("temperature must be 0 or 1, got " + std::to_string(t));
}

struct DecodeConfig {
  Temperature temperature = Temperature::zero;
  std::size_t max_length = 4096;
  std::uint64_t seed = 0;
};

/// Greedy picks the argmax (lowest id on ties); T=1 draws from the row.
inline Token step_token(const TabularModel& model, std::span<const Token> context, Temperature temperature,
                        Rng& rng) {
  const Distribution& p = model.next_distribution(context);
  return temperature == Temperature::zero ? argmax_lowest(p) : sample_index(p, rng);
}

/// ln p(token | context), floored at ln(1e-12).
inline double target_log_prob(const TabularModel& model, std::span<const Token> context, Token token) {
  const Distribution& p = model.next_distribution(context);
  if (!model.vocab().contains(token)) {
    throw InputError("token id " + std::to_string(token) + " outside vocabulary");
  }
  return floored_log(p[static_cast<std::size_t>(token)]);
}

struct Generation {
  TokenSeq tokens;
  std::size_t model_calls = 0;
};

inline std::size_t generation_cap(const TaskInstance& task, const DecodeConfig& config) {
  if (config.max_length < 1) {
    throw InputError("max length must be >= 1");
  }
  return task.max_length == 0 ? config.max_length : std::min(task.max_length, config.max_length);
}

/// Plain autoregressive decoding; one model call per emitted token.
inline Generation generate_autoregressive(const TabularModel& model, const TaskInstance& task,
                                          const DecodeConfig& config, Rng& rng) {
  const std::size_t cap = generation_cap(task, config);
  TokenSeq context = task.prompt;
  Generation out;
  while (out.tokens.size() < cap) {
    const Token t = step_token(model, context, config.temperature, rng);
    ++out.model_calls;
    out.tokens.push_back(t);
    context.push_back(t);
    if (t == model.vocab().eos) {
      break;
    }
  }
  return out;
}

inline Generation generate_autoregressive(const TabularModel& model, const TaskInstance& task,
                                          const DecodeConfig& config) {
  Rng rng(config.seed);
  return generate_autoregressive(model, task, config, rng);
}

}  // namespace cospec
