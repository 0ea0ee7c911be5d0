// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cospec {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;
using Distribution = std::vector<double>;
/// 0/1 per position; used for match vectors and actions.
using Flags = std::vector<std::uint8_t>;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Caller supplied a value outside the operation's domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition or internal invariant was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration could not be resolved (unknown key, missing file, bad method).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic was requested over an empty population.
class StatisticError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

/// Probability floor used whenever a log of zero would be taken.
inline constexpr double kProbFloor = 1e-12;

inline double floored_log(double p) {
  return std::log(p > kProbFloor ? p : kProbFloor);
}

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(sigmoid(z)) without overflow.
inline double log_sigmoid(double z) {
  if (z >= 0.0) {
    return -std::log1p(std::exp(-z));
  }
  return z - std::log1p(std::exp(z));
}

/// Round to `digits` significant decimal digits (serialization helper).
inline double round_significant(double v, int digits = 9) {
  if (!std::isfinite(v) || v == 0.0) {
    return v;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return std::strtod(buf, nullptr);
}

// ---------------------------------------------------------------------------
// Seeds and streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes; stable across platforms.
inline std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Order-sensitive combination of stream components into one seed.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) {
    h = splitmix64(h ^ splitmix64(p));
  }
  return h;
}

inline std::uint64_t hash_tokens(std::span<const Token> tokens, std::uint64_t salt = 0) {
  std::uint64_t h = splitmix64(salt ^ 0x243f6a8885a308d3ULL);
  for (Token t : tokens) {
    h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
  }
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double unit_from_hash(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw from a (normalized) distribution.
inline Token sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  Token last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) {
      continue;
    }
    acc += probs[i];
    last_positive = static_cast<Token>(i);
    if (u < acc) {
      return static_cast<Token>(i);
    }
  }
  // Rounding left u above the accumulated mass.
  if (last_positive < 0) {
    throw ContractError("sample_index: distribution has no positive mass");
  }
  return last_positive;
}

/// Argmax with ties broken toward the lowest index.
inline Token argmax_lowest(std::span<const double> probs) {
  Token best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[static_cast<std::size_t>(best)]) {
      best = static_cast<Token>(i);
    }
  }
  return best;
}

}  // namespace cospec
