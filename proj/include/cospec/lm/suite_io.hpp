// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "cospec/lm/chain_sum.hpp"
#include "cospec/lm/task.hpp"

namespace cospec {

using TaskSuite = std::vector<TaskInstance>;

/// Suite of chain-sum instances; instance k uses seed derive(suite_seed, k).
inline TaskSuite make_chain_suite(std::uint64_t suite_seed, std::size_t count, std::size_t chain_length) {
  TaskSuite suite;
  suite.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    suite.push_back(make_chain_task(derive_seed({suite_seed, k}), chain_length));
  }
  return suite;
}

/// JSON Lines, one {"prompt", "answer", "seed"} object per instance.
inline void write_suite(std::ostream& out, const TaskSuite& suite) {
  for (const TaskInstance& t : suite) {
    nlohmann::ordered_json j;
    j["prompt"] = t.prompt;
    j["answer"] = t.answer;
    j["seed"] = t.seed;
    out << j.dump() << '\n';
  }
}

inline TaskSuite read_suite(std::istream& in, const std::string& name) {
  TaskSuite suite;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(line);
      TaskInstance t;
      t.prompt = j.at("prompt").get<TokenSeq>();
      t.answer = j.at("answer").get<TokenSeq>();
      t.seed = j.at("seed").get<std::uint64_t>();
      if (t.prompt.empty()) {
        throw InputError("empty prompt");
      }
      t.max_length = default_max_length(t.answer.size());
      suite.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(name + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return suite;
}

inline TaskSuite load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open suite file " + path);
  }
  return read_suite(in, path);
}

inline void save_suite(const std::string& path, const TaskSuite& suite) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write suite file " + path);
  }
  write_suite(out, suite);
}

}  // namespace cospec
