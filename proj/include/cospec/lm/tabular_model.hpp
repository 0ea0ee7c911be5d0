// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>

#include "cospec/common.hpp"

namespace cospec {

/// Token alphabet shared by draft and target. The three highest ids are the
/// reserved markers: separator, answer delimiter and end of sequence.
struct Vocabulary {
  std::size_t size = 0;
  Token sep = 0;
  Token answer = 0;
  Token eos = 0;

  static Vocabulary with_size(std::size_t n) {
    if (n < 4) {
      throw InputError("vocabulary size must be >= 4, got " + std::to_string(n));
    }
    const auto top = static_cast<Token>(n);
    return Vocabulary{n, top - 3, top - 2, top - 1};
  }

  bool contains(Token t) const { return t >= 0 && static_cast<std::size_t>(t) < size; }

  void validate() const {
    if (size < 4) {
      throw InputError("vocabulary size must be >= 4");
    }
    if (!contains(sep) || !contains(answer) || !contains(eos)) {
      throw InputError("special token id out of vocabulary");
    }
    if (sep == answer || sep == eos || answer == eos) {
      throw InputError("special token ids must be distinct");
    }
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

struct TokenSeqHash {
  std::size_t operator()(const TokenSeq& s) const noexcept {
    return static_cast<std::size_t>(hash_tokens(s));
  }
};

/// Order-k conditional next-token table with exact probabilities.
///
/// Lookup resolves the longest stored suffix of the context (length k down to
/// 1); a context with no stored suffix gets the default row. The default row is
/// uniform unless one is supplied. Every stored row is normalized to sum to 1.
class TabularModel {
 public:
  /// Rows passed to set_row may deviate from unit mass by at most this much.
  static constexpr double kRowTolerance = 1e-6;

  TabularModel(std::string id, Vocabulary vocab, std::size_t order, Distribution default_row = {})
      : id_(std::move(id)), vocab_(vocab), order_(order) {
    vocab_.validate();
    if (order_ == 0) {
      throw InputError("model order must be >= 1");
    }
    if (default_row.empty()) {
      default_row_.assign(vocab_.size, 1.0 / static_cast<double>(vocab_.size));
    } else {
      default_row_ = normalized(std::move(default_row));
    }
  }

  const std::string& id() const { return id_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t order() const { return order_; }
  const Distribution& default_row() const { return default_row_; }
  std::size_t row_count() const { return table_.size(); }
  const std::unordered_map<TokenSeq, Distribution, TokenSeqHash>& rows() const { return table_; }

  void set_default_row(Distribution row) { default_row_ = normalized(std::move(row)); }

  void set_row(std::span<const Token> window, Distribution row) {
    if (window.empty() || window.size() > order_) {
      throw InputError("row window length must be in [1, order]");
    }
    check_tokens(window);
    table_[TokenSeq(window.begin(), window.end())] = normalized(std::move(row));
  }

  /// p(. | context). Returned reference stays valid while the model lives.
  const Distribution& next_distribution(std::span<const Token> context) const {
    check_tokens(context);
    const std::size_t longest = std::min(order_, context.size());
    TokenSeq key;
    key.reserve(longest);
    for (std::size_t len = longest; len >= 1; --len) {
      key.assign(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
      if (auto it = table_.find(key); it != table_.end()) {
        return it->second;
      }
    }
    return default_row_;
  }

 private:
  void check_tokens(std::span<const Token> tokens) const {
    for (Token t : tokens) {
      if (!vocab_.contains(t)) {
        throw InputError("token id " + std::to_string(t) + " outside vocabulary of size " +
                         std::to_string(vocab_.size));
      }
    }
  }

  Distribution normalized(Distribution row) const {
    if (row.size() != vocab_.size) {
      throw InputError("row has " + std::to_string(row.size()) + " entries, vocabulary has " +
                       std::to_string(vocab_.size));
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw InputError("row contains a negative or non-finite probability");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw InputError("row sums to " + std::to_string(sum) + ", expected 1");
    }
    for (double& p : row) {
      p /= sum;
    }
    return row;
  }

  std::string id_;
  Vocabulary vocab_;
  std::size_t order_;
  Distribution default_row_;
  std::unordered_map<TokenSeq, Distribution, TokenSeqHash> table_;
};

inline const Distribution& next_distribution(const TabularModel& model, std::span<const Token> context) {
  return model.next_distribution(context);
}

}  // namespace cospec
