// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Line-oriented model files:
//
//   vocab=<n> order=<k>
//   ctx=<t1,...,tj> p=<p1,...,pn>      one per stored window (1 <= j <= k)
//   ctx= p=<p1,...,pn>                 optional default row
//
// Lines starting with '#' are comments. Rows whose mass deviates from 1 by
// more than 1e-6 are rejected.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "cospec/common.hpp"
#include "cospec/lm/tabular_model.hpp"

namespace cospec {

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline long parse_long(std::string_view s, const std::string& where) {
  s = trim(s);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw InputError(where + ": expected integer, got '" + std::string(s) + "'");
  }
  return v;
}

inline double parse_double(std::string_view s, const std::string& where) {
  const std::string str(trim(s));
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (str.empty() || end != str.c_str() + str.size()) {
    throw InputError(where + ": expected number, got '" + str + "'");
  }
  return v;
}

/// Value of `key=` inside a whitespace-separated field list.
inline std::string_view field(std::string_view line, std::string_view key, const std::string& where) {
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    const std::size_t end = std::min(line.find(' ', pos), line.size());
    std::string_view tok = line.substr(pos, end - pos);
    if (tok.size() > key.size() && tok.substr(0, key.size()) == key && tok[key.size()] == '=') {
      return tok.substr(key.size() + 1);
    }
    if (tok == std::string(key) + "=") {
      return {};
    }
    pos = end;
  }
  throw InputError(where + ": missing field '" + std::string(key) + "'");
}

}  // namespace detail

inline TabularModel read_model(std::istream& in, const std::string& id) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<TabularModel> model;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = id + ":" + std::to_string(line_no);
    const std::string_view body = detail::trim(line);
    if (body.empty() || body.front() == '#') {
      continue;
    }
    if (!model) {
      const long n = detail::parse_long(detail::field(body, "vocab", where), where);
      const long k = detail::parse_long(detail::field(body, "order", where), where);
      if (n < 4 || k < 1) {
        throw InputError(where + ": header needs vocab >= 4 and order >= 1");
      }
      model.emplace(id, Vocabulary::with_size(static_cast<std::size_t>(n)), static_cast<std::size_t>(k));
      continue;
    }
    const std::string_view ctx = detail::field(body, "ctx", where);
    const std::string_view probs = detail::field(body, "p", where);
    Distribution row;
    for (const std::string& p : detail::split(probs, ',')) {
      row.push_back(detail::parse_double(p, where));
    }
    try {
      if (ctx.empty()) {
        model->set_default_row(std::move(row));
      } else {
        TokenSeq window;
        for (const std::string& t : detail::split(ctx, ',')) {
          window.push_back(static_cast<Token>(detail::parse_long(t, where)));
        }
        model->set_row(window, std::move(row));
      }
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  if (!model) {
    throw InputError(id + ": missing 'vocab=<n> order=<k>' header");
  }
  return std::move(*model);
}

inline TabularModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open model file " + path);
  }
  return read_model(in, path);
}

inline void write_model(std::ostream& out, const TabularModel& model) {
  auto join_probs = [](const Distribution& row) {
    std::string s;
    char buf[40];
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      if (i) s += ',';
      s += buf;
    }
    return s;
  };
  out << "# model " << model.id() << '\n';
  out << "vocab=" << model.vocab().size << " order=" << model.order() << '\n';
  out << "ctx= p=" << join_probs(model.default_row()) << '\n';
  std::vector<const TokenSeq*> keys;
  keys.reserve(model.row_count());
  for (const auto& [k, v] : model.rows()) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(), [](const TokenSeq* a, const TokenSeq* b) { return *a < *b; });
  for (const TokenSeq* k : keys) {
    out << "ctx=";
    for (std::size_t i = 0; i < k->size(); ++i) {
      if (i) out << ',';
      out << (*k)[i];
    }
    out << " p=" << join_probs(model.rows().at(*k)) << '\n';
  }
}

inline void save_model(const std::string& path, const TabularModel& model) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write model file " + path);
  }
  write_model(out, model);
}

}  // namespace cospec
