// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <spdlog/spdlog.h>

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cospec/harness/commands.hpp"
#include "cospec/harness/config.hpp"
#include "cospec/harness/logging.hpp"

namespace {

cospec::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  cospec::ExperimentConfig cfg = cospec::ExperimentConfig::load(path);
  for (const std::string& o : overrides) cfg.apply_override(o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative speculative decoding experiments on tabular language models"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config file")->required();
    sub->add_option("--set", overrides, "override a config value (key=value)");
  };

  auto* gen = app.add_subcommand("gen-tasks", "write a seeded task suite");
  add_config(gen);

  auto* run = app.add_subcommand("run", "decode the suite with every configured method");
  add_config(run);

  std::string stage = "sft";
  bool no_warmup = false;
  auto* train = app.add_subcommand("train", "train the arbitration policy");
  add_config(train);
  train->add_option("--stage", stage, "sft or rl")->required();
  train->add_flag("--no-warmup", no_warmup, "start RL from a reject-all reference instead of an SFT policy");

  auto* diagnose = app.add_subcommand("diagnose", "counterfactual mismatch analysis");
  add_config(diagnose);

  std::vector<std::string> result_files;
  std::string merged_out;
  auto* report = app.add_subcommand("report", "merge result files into one table");
  report->add_option("files", result_files, "results.csv files")->required();
  report->add_option("-o,--out", merged_out, "merged CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    cospec::init_logging();
    if (gen->parsed()) {
      std::cout << cospec::cmd_gen_tasks(load_config(config_path, overrides)) << '\n';
    } else if (run->parsed()) {
      const auto cfg = load_config(config_path, overrides);
      cospec::cmd_run(cfg);
      std::cout << cfg.output_path("results.csv") << '\n';
    } else if (train->parsed()) {
      const auto cfg = load_config(config_path, overrides);
      std::cout << cospec::cmd_train(cfg, cospec::parse_stage(stage), no_warmup) << '\n';
    } else if (diagnose->parsed()) {
      const auto cfg = load_config(config_path, overrides);
      cospec::cmd_diagnose(cfg);
      std::cout << cfg.output_path("diagnose.json") << '\n';
    } else if (report->parsed()) {
      std::cout << cospec::cmd_report(result_files, merged_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
