// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Chain-sum task family and its noisy tabular experts.
//
// Prompt:      d1 .. dn SEP
// Completion:  s1 .. sn ANS sn EOS      with s_j = (s_{j-1} + d_j) mod 10, s_0 = 0
//
// Trace token j sits exactly n+1 positions after d_j, so an order-(n+1) model
// sees both the digit to add and the previously written running sum. Experts
// follow the *written* trace: one wrong trace digit propagates to the answer.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cospec/common.hpp"
#include "cospec/lm/tabular_model.hpp"
#include "cospec/lm/task.hpp"

namespace cospec {

inline constexpr std::size_t kChainDigits = 10;
inline constexpr std::size_t kChainVocabSize = kChainDigits + 3;

inline Vocabulary chain_vocabulary() { return Vocabulary::with_size(kChainVocabSize); }

inline bool is_digit(Token t) { return t >= 0 && t < static_cast<Token>(kChainDigits); }

/// A task family shares one chain length and one state-hash salt. Every
/// expert built for the same family places its errors using the same per-state
/// hash, so experts with different error seeds get disjoint error arcs.
struct ChainFamily {
  std::size_t chain_length = 4;
  std::uint64_t salt = 0;

  std::size_t order() const { return chain_length + 1; }
  std::size_t completion_length() const { return chain_length + 3; }
};

inline TaskInstance make_chain_task_from_digits(std::span<const Token> digits, std::uint64_t seed = 0) {
  if (digits.empty()) {
    throw InputError("chain length must be >= 1");
  }
  const Vocabulary vocab = chain_vocabulary();
  TaskInstance task;
  task.seed = seed;
  int running = 0;
  for (Token d : digits) {
    if (!is_digit(d)) {
      throw InputError("chain digits must be in [0, 9]");
    }
    task.prompt.push_back(d);
    running = (running + d) % 10;
    task.answer.push_back(running);
  }
  task.prompt.push_back(vocab.sep);
  task.answer.push_back(vocab.answer);
  task.answer.push_back(running);
  task.answer.push_back(vocab.eos);
  task.max_length = default_max_length(task.answer.size());
  return task;
}

inline TaskInstance make_chain_task(std::uint64_t seed, std::size_t chain_length) {
  if (chain_length < 1) {
    throw InputError("chain length must be >= 1");
  }
  Rng rng(derive_seed({seed, hash_name("chain-sum")}));
  TokenSeq digits(chain_length);
  for (Token& d : digits) {
    d = static_cast<Token>(rng() % kChainDigits);
  }
  return make_chain_task_from_digits(digits, seed);
}

/// What the task rule prescribes after a given window.
struct ChainStep {
  Token correct = 0;
  /// Digit-emitting states (trace steps and the answer) are where experts err.
  /// ANS and EOS emission are structural and always certain.
  bool digit_state = false;
};

/// Task rule over an order-(n+1) window; nullopt off the task grid.
inline std::optional<ChainStep> chain_rule(const ChainFamily& family, std::span<const Token> window) {
  const std::size_t n = family.chain_length;
  const Vocabulary vocab = chain_vocabulary();
  if (window.size() != n + 1) {
    return std::nullopt;
  }
  auto all_digits = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < to; ++k) {
      if (!is_digit(window[k])) return false;
    }
    return true;
  };
  for (std::size_t p = 0; p <= n; ++p) {
    if (window[p] != vocab.sep) {
      continue;
    }
    if (!all_digits(0, p) || !all_digits(p + 1, n + 1)) {
      return std::nullopt;
    }
    if (p == 0) {
      return ChainStep{vocab.answer, false};
    }
    const bool first_step = (p == n);
    const Token prev = first_step ? 0 : window[n];
    return ChainStep{static_cast<Token>((prev + window[0]) % 10), true};
  }
  if (window[n] == vocab.answer && all_digits(0, n)) {
    return ChainStep{window[n - 1], true};
  }
  if (window[n - 1] == vocab.answer && all_digits(0, n - 1) && is_digit(window[n])) {
    return ChainStep{vocab.eos, false};
  }
  return std::nullopt;
}

/// Every window the task grid can produce: (n+3) * 10^n of them.
inline std::vector<TokenSeq> enumerate_chain_windows(const ChainFamily& family) {
  const std::size_t n = family.chain_length;
  const Vocabulary vocab = chain_vocabulary();
  std::size_t combos = 1;
  for (std::size_t k = 0; k < n; ++k) combos *= kChainDigits;

  std::vector<TokenSeq> windows;
  windows.reserve(combos * (n + 3));
  TokenSeq digits(n);
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rest = c;
    for (std::size_t k = 0; k < n; ++k) {
      digits[n - 1 - k] = static_cast<Token>(rest % kChainDigits);
      rest /= kChainDigits;
    }
    // SEP at every index: trace steps (p >= 1) and the ANS step (p == 0).
    for (std::size_t p = 0; p <= n; ++p) {
      TokenSeq w(digits.begin(), digits.begin() + static_cast<std::ptrdiff_t>(p));
      w.push_back(vocab.sep);
      w.insert(w.end(), digits.begin() + static_cast<std::ptrdiff_t>(p), digits.end());
      windows.push_back(std::move(w));
    }
    TokenSeq answer_step = digits;
    answer_step.push_back(vocab.answer);
    windows.push_back(std::move(answer_step));

    TokenSeq eos_step(digits.begin(), digits.end() - 1);
    eos_step.push_back(vocab.answer);
    eos_step.push_back(digits.back());
    windows.push_back(std::move(eos_step));
  }
  return windows;
}

/// Start of an expert's error arc on the unit circle (golden-ratio spacing).
inline double error_arc_offset(std::uint64_t error_seed) {
  const double x = static_cast<double>(error_seed % (1ULL << 52)) * 0.6180339887498949;
  return x - std::floor(x);
}

/// A digit state is an error state for (p, seed) when its family hash falls in
/// the seed's arc of width 1 - p.
inline bool is_error_state(const ChainFamily& family, double accuracy, std::uint64_t error_seed,
                           std::span<const Token> window) {
  const double u = unit_from_hash(hash_tokens(window, family.salt));
  double shifted = u - error_arc_offset(error_seed);
  if (shifted < 0.0) shifted += 1.0;
  return shifted < 1.0 - accuracy;
}

/// True when the two experts' error arcs cannot intersect.
inline bool error_arcs_disjoint(double accuracy_a, std::uint64_t seed_a, double accuracy_b,
                                std::uint64_t seed_b) {
  const double wa = 1.0 - accuracy_a;
  const double wb = 1.0 - accuracy_b;
  double gap = error_arc_offset(seed_b) - error_arc_offset(seed_a);
  if (gap < 0.0) gap += 1.0;
  // b starts `gap` after a; a must end before b starts and b must wrap before a.
  return wa <= gap && wb <= 1.0 - gap;
}

/// The seeded wrong digit an expert confuses with the correct one.
inline Token chain_wrong_token(const ChainFamily& family, std::uint64_t error_seed,
                               std::span<const Token> window, Token correct) {
  const std::uint64_t h = hash_tokens(window, derive_seed({family.salt, error_seed, 0x77}));
  const auto k = static_cast<Token>(h % (kChainDigits - 1));
  return k < correct ? k : k + 1;
}

/// Tabular expert for the family with per-step accuracy `accuracy`.
///
/// Off the error arc a digit state puts mass p on the correct digit and 1-p on
/// the seeded wrong digit; on the arc the two masses swap, so greedy decoding
/// errs exactly on the error states. Structural states are point masses, and
/// the window [EOS] maps to EOS so blocks drafted past the end stay put.
inline TabularModel make_noisy_expert(const ChainFamily& family, double accuracy, std::uint64_t error_seed) {
  if (!(accuracy > 0.0 && accuracy <= 1.0)) {
    throw InputError("per-step accuracy must be in (0, 1]");
  }
  const Vocabulary vocab = chain_vocabulary();
  char id[96];
  std::snprintf(id, sizeof(id), "chain%zu-p%.4g-e%llu", family.chain_length, accuracy,
                static_cast<unsigned long long>(error_seed));
  TabularModel model(id, vocab, family.order());

  for (const TokenSeq& w : enumerate_chain_windows(family)) {
    const auto step = chain_rule(family, w);
    if (!step) {
      throw ContractError("enumerated window is off the task grid");
    }
    Distribution row(vocab.size, 0.0);
    if (!step->digit_state || accuracy == 1.0) {
      row[static_cast<std::size_t>(step->correct)] = 1.0;
    } else {
      const Token wrong = chain_wrong_token(family, error_seed, w, step->correct);
      const bool err = is_error_state(family, accuracy, error_seed, w);
      row[static_cast<std::size_t>(step->correct)] = err ? 1.0 - accuracy : accuracy;
      row[static_cast<std::size_t>(wrong)] = err ? accuracy : 1.0 - accuracy;
    }
    model.set_row(w, std::move(row));
  }
  Distribution absorb(vocab.size, 0.0);
  absorb[static_cast<std::size_t>(vocab.eos)] = 1.0;
  const Token eos_window[] = {vocab.eos};
  model.set_row(eos_window, std::move(absorb));
  return model;
}

}  // namespace cospec
