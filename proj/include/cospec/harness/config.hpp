// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Experiment configuration: one `key = value` pair per line, '#' starts a
// comment. Keys are dotted paths; see kConfigDefaults for the full list.
// `seed` is mandatory. Relative paths resolve against the config file's
// directory.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"
#include "cospec/rl/credit.hpp"
#include "cospec/rl/grpo.hpp"
#include "cospec/rl/sft.hpp"
#include "cospec/spd/stats.hpp"

namespace cospec {

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"seed", ""},
      {"suite.path", ""},
      {"suite.benchmark", "chain-sum"},
      {"suite.seed", "1"},
      {"suite.count", "200"},
      {"suite.chain_length", "4"},
      {"suite.eval_path", ""},
      {"models.family_salt", "0"},
      {"models.p_target", "0.97"},
      {"models.p_draft", "0.90"},
      {"models.target_error_seed", "1"},
      {"models.draft_error_seed", "2"},
      {"models.target_path", ""},
      {"models.draft_path", ""},
      {"engine.K", "25"},
      {"engine.temperature", "0"},
      {"engine.max_length", "4096"},
      {"arbitration.lambda", "0.6"},
      {"arbitration.policy_path", ""},
      {"arbitration.oracle_continuation", "always-reject"},
      {"methods", "target-only,vanilla-spd,cospec:learned"},
      {"seeds", "1"},
      {"reward.alpha", "1.0"},
      {"reward.beta", "0.25"},
      {"reward.eta_fail", "0.5"},
      {"reward.epsilon", "1e-8"},
      {"train.group_size", "12"},
      {"train.prompts_per_update", "16"},
      {"train.updates", "200"},
      {"train.epochs", "4"},
      {"train.lr", "5e-5"},
      {"train.weight_decay", "0"},
      {"train.grad_clip", "1.0"},
      {"train.clip", "0.2"},
      {"train.entropy_weight", "0.01"},
      {"train.kl_weight", "0.02"},
      {"train.reference_path", ""},
      {"train.output_path", ""},
      {"train.archive_rollouts", "last"},
      {"sft.steps", "300"},
      {"sft.lr", "0.05"},
      {"sft.weight_decay", "0.1"},
      {"sft.sharpness", "5"},
      {"cost.draft", "0.1"},
      {"cost.arbitrator", "0.1"},
      {"output.dir", "out"},
      {"diagnose.policy", "learned"},
      {"diagnose.mode", "auto"},
      {"diagnose.mc_samples", "32"},
  };
  return d;
}

namespace detail {

inline std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

class ExperimentConfig {
 public:
  ExperimentConfig() : values_(config_defaults()) {}

  /// Parses config text; `base_dir` anchors relative paths.
  static ExperimentConfig parse(std::istream& in, const std::string& name, std::filesystem::path base_dir = {}) {
    ExperimentConfig cfg;
    cfg.base_dir_ = std::move(base_dir);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim_copy(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      try {
        cfg.set(detail::trim_copy(t.substr(0, eq)), detail::trim_copy(t.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(name + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return cfg;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw ConfigError("cannot open config file " + path);
    }
    return parse(in, path, std::filesystem::path(path).parent_path());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    values_[key] = value;
  }

  /// Applies a `key=value` override.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + assignment + "' is not key=value");
    }
    set(detail::trim_copy(assignment.substr(0, eq)), detail::trim_copy(assignment.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
    return d;
  }

  std::uint64_t uint(const std::string& key) const {
    const std::string& v = str(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("config key '" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
    return out;
  }

  std::vector<std::string> list(const std::string& key) const { return detail::split_list(str(key)); }

  /// Empty when the key is unset; otherwise the path resolved against the config directory.
  std::string path(const std::string& key) const {
    const std::string& v = str(key);
    if (v.empty()) return {};
    std::filesystem::path p(v);
    if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
    return p.lexically_normal().string();
  }

  std::string output_path(const std::string& file) const {
    std::filesystem::path dir(path("output.dir"));
    return (dir / file).string();
  }

  /// Validates mandatory keys and ranges.
  void validate() const {
    if (str("seed").empty()) {
      throw ConfigError("config must set 'seed'");
    }
    uint("seed");
    if (uint("engine.K") < 1) throw ConfigError("engine.K must be >= 1");
    const double lambda = real("arbitration.lambda");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("arbitration.lambda must lie in [0, 1]");
    const auto t = uint("engine.temperature");
    if (t > 1) throw ConfigError("engine.temperature must be 0 or 1");
    if (uint("suite.chain_length") < 1) throw ConfigError("suite.chain_length must be >= 1");
    for (const char* key : {"models.target_path", "models.draft_path"}) {
      const std::string p = path(key);
      if (!p.empty() && !std::filesystem::exists(p)) {
        throw ConfigError(std::string(key) + " does not exist: " + p);
      }
    }
    reward().validate();
    train().validate();
    seeds();
  }

  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> out;
    for (const std::string& s : list("seeds")) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("seeds entry '" + s + "' is not a nonnegative integer");
      }
      out.push_back(v);
    }
    if (out.empty()) throw ConfigError("seeds must list at least one seed");
    return out;
  }

  CospecSettings cospec_settings() const {
    CospecSettings s;
    s.k = uint("engine.K");
    s.temperature = temperature_from_int(static_cast<long>(uint("engine.temperature")));
    s.rule.lambda = real("arbitration.lambda");
    s.max_length = uint("engine.max_length");
    return s;
  }

  RewardConfig reward() const {
    return RewardConfig{real("reward.alpha"), real("reward.beta"), real("reward.eta_fail"), real("reward.epsilon")};
  }

  TrainConfig train() const {
    TrainConfig t;
    t.group_size = uint("train.group_size");
    t.prompts_per_update = uint("train.prompts_per_update");
    t.updates = uint("train.updates");
    t.epochs = uint("train.epochs");
    t.lr = real("train.lr");
    t.weight_decay = real("train.weight_decay");
    t.grad_clip = real("train.grad_clip");
    t.ppo.clip = real("train.clip");
    t.ppo.entropy_weight = real("train.entropy_weight");
    t.ppo.kl_weight = real("train.kl_weight");
    return t;
  }

  SftConfig sft() const {
    return SftConfig{uint("sft.steps"), real("sft.lr"), real("sft.weight_decay"), real("sft.sharpness")};
  }

  CostWeights cost() const { return CostWeights{real("cost.draft"), real("cost.arbitrator")}; }

  /// Canonical `key=value` listing of every setting, sorted by key.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  /// 16-hex-digit FNV-1a digest of the canonical listing.
  std::string digest() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_name(canonical())));
    return buf;
  }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

}  // namespace cospec
