// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <string>

#include "cospec/arbitration/features.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/common.hpp"

namespace cospec {

inline constexpr int kPolicyFormatVersion = 1;

struct PolicyMetadata {
  std::string stage;
  std::string config_digest;
  std::uint64_t seed = 0;
};

struct PolicyFile {
  PolicyParams params;
  PolicyMetadata meta;
};

inline void write_policy(std::ostream& out, const PolicyParams& params, const PolicyMetadata& meta) {
  if (params.dim() != kFeatureCount) {
    throw InputError("policy dimension does not match the feature extractor");
  }
  nlohmann::ordered_json j;
  j["version"] = kPolicyFormatVersion;
  auto names = nlohmann::ordered_json::array();
  for (std::string_view n : kFeatureNames) names.push_back(std::string(n));
  j["feature_names"] = std::move(names);
  j["weights"] = params.weights;
  j["bias"] = params.bias;
  j["stage"] = meta.stage;
  j["config_digest"] = meta.config_digest;
  j["seed"] = meta.seed;
  out << j.dump(2) << '\n';
}

inline PolicyFile read_policy(std::istream& in, const std::string& name) {
  PolicyFile f;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != kPolicyFormatVersion) {
      throw InputError("unsupported policy version");
    }
    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    if (names.size() != kFeatureCount) {
      throw InputError("policy lists " + std::to_string(names.size()) + " features, expected " +
                       std::to_string(kFeatureCount));
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (names[i] != kFeatureNames[i]) {
        throw InputError("feature " + std::to_string(i) + " is '" + names[i] + "', expected '" +
                         std::string(kFeatureNames[i]) + "'");
      }
    }
    f.params.weights = j.at("weights").get<std::vector<double>>();
    f.params.bias = j.at("bias").get<double>();
    if (f.params.weights.size() != kFeatureCount) {
      throw InputError("weight vector length does not match feature_names");
    }
    f.meta.stage = j.value("stage", std::string());
    f.meta.config_digest = j.value("config_digest", std::string());
    f.meta.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw InputError(name + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(name + ": " + e.what());
  }
  f.params.validate();
  return f;
}

inline PolicyFile load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open policy file " + path);
  }
  return read_policy(in, path);
}

inline void save_policy(const std::string& path, const PolicyParams& params, const PolicyMetadata& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write policy file " + path);
  }
  write_policy(out, params, meta);
}

}  // namespace cospec
