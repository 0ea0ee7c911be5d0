// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

#include "cospec/common.hpp"

namespace cospec {

/// COSPEC_LOG in {error, info, debug}; unset means info.
inline spdlog::level::level_enum log_level_from_env() {
  const char* v = std::getenv("COSPEC_LOG");
  if (!v || !*v) return spdlog::level::info;
  const std::string s(v);
  if (s == "error") return spdlog::level::err;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  throw ConfigError("COSPEC_LOG must be one of error, info, debug; got '" + s + "'");
}

inline void init_logging() {
  auto logger = spdlog::get("cospec");
  if (!logger) {
    logger = spdlog::stderr_logger_st("cospec");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  logger->set_level(log_level_from_env());
}

}  // namespace cospec
