// Copyright 2026 The cospec-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cospec/arbitration/cospec.hpp"
#include "cospec/arbitration/policy.hpp"
#include "cospec/arbitration/policy_io.hpp"
#include "cospec/common.hpp"
#include "cospec/diagnostics/analysis.hpp"
#include "cospec/diagnostics/branch.hpp"
#include "cospec/harness/config.hpp"
#include "cospec/lm/chain_sum.hpp"
#include "cospec/lm/model_io.hpp"
#include "cospec/lm/suite_io.hpp"
#include "cospec/rl/grpo.hpp"
#include "cospec/rl/sft.hpp"
#include "cospec/spd/engine.hpp"
#include "cospec/spd/stats.hpp"
#include "cospec/spd/trace_io.hpp"

namespace cospec {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

inline std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  return out;
}

struct ModelPair {
  TabularModel draft;
  TabularModel target;
};

/// Model files when configured, otherwise the seeded chain-sum experts.
inline ModelPair build_models(const ExperimentConfig& cfg) {
  ChainFamily family;
  family.chain_length = cfg.uint("suite.chain_length");
  family.salt = cfg.uint("models.family_salt");
  const std::string tp = cfg.path("models.target_path");
  const std::string dp = cfg.path("models.draft_path");
  TabularModel target = tp.empty() ? make_noisy_expert(family, cfg.real("models.p_target"),
                                                       cfg.uint("models.target_error_seed"))
                                   : load_model(tp);
  TabularModel draft = dp.empty() ? make_noisy_expert(family, cfg.real("models.p_draft"),
                                                      cfg.uint("models.draft_error_seed"))
                                  : load_model(dp);
  require_shared_vocab(draft, target);
  return ModelPair{std::move(draft), std::move(target)};
}

inline TaskSuite generated_suite(const ExperimentConfig& cfg) {
  return make_chain_suite(cfg.uint("suite.seed"), cfg.uint("suite.count"), cfg.uint("suite.chain_length"));
}

/// The suite file when `key` is set, otherwise the generated suite.
inline TaskSuite resolve_suite(const ExperimentConfig& cfg, const std::string& key = "suite.path") {
  const std::string p = cfg.path(key);
  if (p.empty()) return generated_suite(cfg);
  if (!std::filesystem::exists(p)) {
    throw ConfigError(key + " does not exist: " + p);
  }
  return load_suite(p);
}

inline TaskSuite resolve_eval_suite(const ExperimentConfig& cfg) {
  return cfg.str("suite.eval_path").empty() ? resolve_suite(cfg) : resolve_suite(cfg, "suite.eval_path");
}

inline std::shared_ptr<const ArbitrationPolicy> make_policy(const std::string& name, const ExperimentConfig& cfg);

inline std::shared_ptr<const ArbitrationPolicy> load_learned_policy(const ExperimentConfig& cfg) {
  const std::string p = cfg.path("arbitration.policy_path");
  if (p.empty()) {
    throw ConfigError("policy 'learned' needs arbitration.policy_path");
  }
  return std::make_shared<LearnedPolicy>(load_policy(p).params);
}

inline UtilityEstimator estimator_for(const ExperimentConfig& cfg, const CospecSettings& settings,
                                      const ArbitrationPolicy& continuation) {
  UtilityEstimator est;
  est.seed = cfg.uint("seed");
  est.samples = cfg.uint("diagnose.mc_samples");
  const std::string mode = cfg.str("diagnose.mode");
  if (mode == "exact") {
    est.mode = EstimatorMode::exact;
  } else if (mode == "monte-carlo") {
    est.mode = EstimatorMode::monte_carlo;
  } else if (mode == "auto") {
    est.mode = exact_mode_applicable(settings, continuation) ? EstimatorMode::exact : EstimatorMode::monte_carlo;
  } else {
    throw ConfigError("diagnose.mode must be auto, exact or monte-carlo; got '" + mode + "'");
  }
  return est;
}

inline std::shared_ptr<const ArbitrationPolicy> make_policy(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "always-reject") return std::make_shared<AlwaysRejectPolicy>();
  if (name == "always-accept") return std::make_shared<AlwaysAcceptPolicy>();
  if (name == "learned") return load_learned_policy(cfg);
  if (name == "oracle") {
    const std::string cont = cfg.str("arbitration.oracle_continuation");
    if (cont == "oracle") {
      throw ConfigError("the oracle cannot continue with itself");
    }
    auto continuation = make_policy(cont, cfg);
    const UtilityEstimator est = estimator_for(cfg, cfg.cospec_settings(), *continuation);
    return std::make_shared<OraclePolicy>(std::move(continuation), est);
  }
  throw ConfigError("unknown policy '" + name + "'");
}

enum class MethodKind { target_only, vanilla_spd, spec_sampling, cospec };

struct Method {
  std::string name;
  MethodKind kind = MethodKind::target_only;
  std::string policy;
};

inline Method parse_method(const std::string& token) {
  if (token == "target-only") return {token, MethodKind::target_only, {}};
  if (token == "vanilla-spd") return {token, MethodKind::vanilla_spd, {}};
  if (token == "spec-sampling") return {token, MethodKind::spec_sampling, {}};
  const std::string prefix = "cospec:";
  if (token.rfind(prefix, 0) == 0) {
    const std::string p = token.substr(prefix.size());
    if (p == "learned" || p == "oracle" || p == "always-accept" || p == "always-reject") {
      return {token, MethodKind::cospec, p};
    }
  }
  throw ConfigError("unknown method '" + token + "'");
}

/// Independent stream per (method, task, seed).
inline std::uint64_t method_stream(const std::string& method, std::uint64_t task_seed, std::uint64_t seed) {
  return derive_seed({hash_name(method), task_seed, seed});
}

// ---------------------------------------------------------------------------
// gen-tasks
// ---------------------------------------------------------------------------

/// Writes the generated suite to suite.path (default <output.dir>/suite.jsonl).
inline std::string cmd_gen_tasks(const ExperimentConfig& cfg) {
  cfg.validate();
  std::string path = cfg.path("suite.path");
  if (path.empty()) path = cfg.output_path("suite.jsonl");
  const TaskSuite suite = generated_suite(cfg);
  std::ofstream out = open_output(path);
  write_suite(out, suite);
  if (!out) throw IoError("failed writing " + path);
  spdlog::info("wrote {} instances to {}", suite.size(), path);
  return path;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string method;
  std::string benchmark;
  double speed = 0.0;
  double tau = 0.0;
  double score = 0.0;
  std::string seeds;
};

inline const char* kResultHeader = "method,benchmark,speed,tau,score,seeds";

inline void write_results(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultHeader << '\n';
  for (const ResultRow& r : rows) {
    out << r.method << ',' << r.benchmark << ',' << format_float(r.speed) << ',' << format_float(r.tau) << ','
        << format_float(r.score) << ',' << r.seeds << '\n';
  }
}

struct MethodOutcome {
  RunStats stats;
  std::vector<int> scores;
};

/// Decodes every task with one method and seed; rounds go to `trace` when given.
inline MethodOutcome run_method(const Method& m, const ModelPair& models, const TaskSuite& suite,
                                const ExperimentConfig& cfg, std::uint64_t seed, std::ostream* trace) {
  const CospecSettings settings = cfg.cospec_settings();
  DecodeConfig dc;
  dc.temperature = settings.temperature;
  dc.max_length = settings.max_length;
  std::shared_ptr<const ArbitrationPolicy> policy;
  if (m.kind == MethodKind::cospec) policy = make_policy(m.policy, cfg);

  MethodOutcome out;
  for (const TaskInstance& task : suite) {
    Rng rng(method_stream(m.name, task.seed, seed));
    TokenSeq output;
    std::vector<RoundRecord> rounds;
    switch (m.kind) {
      case MethodKind::target_only: {
        SpdRun run = run_target_only(models.target, task, dc, rng);
        output = std::move(run.output);
        out.stats += run.stats;
        break;
      }
      case MethodKind::vanilla_spd: {
        SpdRun run = run_vanilla_spd(models.draft, models.target, task, settings.k, dc);
        output = std::move(run.output);
        out.stats += run.stats;
        rounds = std::move(run.rounds);
        break;
      }
      case MethodKind::spec_sampling: {
        SpdRun run = run_speculative_sampling(models.draft, models.target, task, settings.k, dc, rng);
        output = std::move(run.output);
        out.stats += run.stats;
        rounds = std::move(run.rounds);
        break;
      }
      case MethodKind::cospec: {
        Rollout ro = run_cospec(models.draft, models.target, *policy, task, settings, rng);
        output = std::move(ro.output);
        out.stats += ro.stats;
        rounds = std::move(ro.rounds);
        break;
      }
    }
    out.scores.push_back(score(task, output, models.target.vocab()));
    if (trace) {
      for (const RoundRecord& rec : rounds) {
        nlohmann::ordered_json j;
        j["task"] = task.seed;
        const nlohmann::ordered_json body = round_to_json(rec);
        for (const auto& [k, v] : body.items()) j[k] = v;
        *trace << j.dump() << '\n';
      }
    }
  }
  return out;
}

inline std::string sanitize_name(std::string s) {
  for (char& c : s) {
    if (c == ':' || c == '/' || c == ' ') c = '_';
  }
  return s;
}

/// Runs the method matrix; writes results.csv, timing.csv and per-run traces.
inline std::vector<ResultRow> cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<Method> methods;
  for (const std::string& token : cfg.list("methods")) methods.push_back(parse_method(token));
  if (methods.empty()) throw ConfigError("methods must list at least one method");
  const CospecSettings settings = cfg.cospec_settings();
  for (const Method& m : methods) {
    if (m.kind == MethodKind::vanilla_spd && settings.temperature != Temperature::zero) {
      throw ConfigError("method 'vanilla-spd' is greedy; use 'spec-sampling' at engine.temperature = 1");
    }
    if (m.kind == MethodKind::spec_sampling && settings.temperature != Temperature::one) {
      throw ConfigError("method 'spec-sampling' needs engine.temperature = 1");
    }
    if (m.kind == MethodKind::cospec) make_policy(m.policy, cfg);
  }

  const ModelPair models = build_models(cfg);
  const TaskSuite suite = resolve_suite(cfg);
  if (suite.empty()) throw InputError("suite is empty");
  const std::vector<std::uint64_t> seeds = cfg.seeds();
  const CostWeights weights = cfg.cost();
  const std::string benchmark = cfg.str("suite.benchmark");

  std::string seed_list;
  {
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) seed_list += (i ? ";" : "") + std::to_string(sorted[i]);
  }

  std::vector<ResultRow> rows;
  std::ofstream timing = open_output(cfg.output_path("timing.csv"));
  timing << "method,seed,wall_seconds\n";
  for (const Method& m : methods) {
    RunStats pooled;
    double solved = 0.0;
    std::size_t scored = 0;
    for (std::uint64_t seed : seeds) {
      std::ofstream trace;
      std::ostream* trace_ptr = nullptr;
      if (m.kind != MethodKind::target_only) {
        trace = open_output(cfg.output_path("traces/" + sanitize_name(m.name) + "_seed" + std::to_string(seed) +
                                            ".jsonl"));
        trace_ptr = &trace;
      }
      const auto t0 = std::chrono::steady_clock::now();
      const MethodOutcome o = run_method(m, models, suite, cfg, seed, trace_ptr);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      timing << m.name << ',' << seed << ',' << format_float(secs) << '\n';
      pooled += o.stats;
      for (int s : o.scores) solved += s;
      scored += o.scores.size();
      spdlog::debug("{} seed {}: {} rounds, {} tokens", m.name, seed, o.stats.rounds, o.stats.emitted);
    }
    ResultRow row;
    row.method = m.name;
    row.benchmark = benchmark;
    row.speed = cost_model_speedup(pooled, weights);
    row.tau = mean_accepted_length(pooled);
    row.score = solved / static_cast<double>(scored);
    row.seeds = seed_list;
    spdlog::info("{}: speed {:.4f} tau {:.4f} score {:.4f}", row.method, row.speed, row.tau, row.score);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.method, a.benchmark) < std::tie(b.method, b.benchmark);
  });
  std::ofstream out = open_output(cfg.output_path("results.csv"));
  write_results(out, rows);
  if (!out) throw IoError("failed writing results.csv");
  return rows;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

enum class TrainStage { sft, rl };

inline TrainStage parse_stage(const std::string& s) {
  if (s == "sft") return TrainStage::sft;
  if (s == "rl") return TrainStage::rl;
  throw ConfigError("unknown training stage '" + s + "' (expected sft or rl)");
}

inline nlohmann::ordered_json rollout_to_json(const Rollout& ro) {
  nlohmann::ordered_json j;
  j["task"] = ro.task_seed;
  j["corr"] = ro.correct;
  auto rounds = nlohmann::ordered_json::array();
  for (const RoundRecord& rec : ro.rounds) {
    nlohmann::ordered_json r = round_to_json(rec);
    auto surprisal = nlohmann::ordered_json::array();
    for (double lp : rec.verify.draft_log_probs) surprisal.push_back(trace_float(-lp));
    r["surprisal"] = std::move(surprisal);
    rounds.push_back(std::move(r));
  }
  j["rounds"] = std::move(rounds);
  return j;
}

inline void write_train_log(std::ostream& out, const std::vector<UpdateLog>& log) {
  out << "update,mean_J,mean_score,mean_tau,loss,grad_norm,entropy,kl\n";
  for (const UpdateLog& u : log) {
    out << u.update << ',' << format_float(u.mean_J) << ',' << format_float(u.mean_score) << ','
        << format_float(u.mean_tau) << ',' << format_float(u.loss) << ',' << format_float(u.grad_norm) << ','
        << format_float(u.entropy) << ',' << format_float(u.kl) << '\n';
  }
}

/// Trains one stage and returns the written policy path.
inline std::string cmd_train(const ExperimentConfig& cfg, TrainStage stage, bool no_warmup) {
  cfg.validate();
  const ModelPair models = build_models(cfg);
  const TaskSuite suite = resolve_suite(cfg);
  const CospecSettings settings = cfg.cospec_settings();
  const std::uint64_t seed = cfg.uint("seed");
  PolicyMetadata meta{stage == TrainStage::sft ? "sft" : "rl", cfg.digest(), seed};

  std::string out_path = cfg.path("train.output_path");
  if (out_path.empty()) out_path = cfg.output_path(stage == TrainStage::sft ? "policy_sft.json" : "policy_rl.json");

  if (stage == TrainStage::sft) {
    const SftResult res = train_sft(models.draft, models.target, suite, settings, cfg.sft());
    spdlog::info("sft: {} labeled mismatches, loss {:.6f} -> {:.6f}", res.examples, res.losses.front(),
                 res.losses.back());
    std::ofstream log = open_output(cfg.output_path("sft_log.csv"));
    log << "step,loss\n";
    for (std::size_t i = 0; i < res.losses.size(); ++i) log << i << ',' << format_float(res.losses[i]) << '\n';
    std::ofstream out = open_output(out_path);
    write_policy(out, res.params, meta);
    return out_path;
  }

  PolicyParams reference;
  if (no_warmup) {
    reference = PolicyParams::reject_all();
  } else {
    std::string ref_path = cfg.path("train.reference_path");
    if (ref_path.empty()) ref_path = cfg.output_path("policy_sft.json");
    if (!std::filesystem::exists(ref_path)) {
      throw ConfigError("RL needs a warm-up policy at " + ref_path + " (run --stage sft or pass --no-warmup)");
    }
    reference = load_policy(ref_path).params;
  }

  const std::string archive = cfg.str("train.archive_rollouts");
  if (archive != "none" && archive != "last" && archive != "all") {
    throw ConfigError("train.archive_rollouts must be none, last or all");
  }
  const TrainConfig tc = cfg.train();
  std::ofstream rollouts;
  if (archive != "none") rollouts = open_output(cfg.output_path("rollouts.jsonl"));
  RolloutSink sink = [&](std::size_t update, const Rollout& ro) {
    if (archive == "all" || (archive == "last" && update + 1 == tc.updates)) {
      rollouts << rollout_to_json(ro).dump() << '\n';
    }
  };
  const RlResult res = train_rl(models.draft, models.target, suite, reference, reference, settings, cfg.reward(), tc,
                                seed, sink);
  for (const UpdateLog& u : res.log) {
    spdlog::debug("update {}: J {:.4f} score {:.4f} tau {:.4f} loss {:.4f}", u.update, u.mean_J, u.mean_score,
                  u.mean_tau, u.loss);
  }
  std::ofstream log = open_output(cfg.output_path("train_log.csv"));
  write_train_log(log, res.log);
  std::ofstream out = open_output(out_path);
  write_policy(out, res.params, meta);
  spdlog::info("rl: {} updates written to {}", res.log.size(), out_path);
  return out_path;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseResult {
  MismatchBreakdown breakdown;
  ComplementarityReport report;
  GapResult gap;
  bool exact = true;
};

inline void write_breakdown(std::ostream& out, const MismatchBreakdown& b) {
  out << "category,count,share,draft_not_worse,draft_accept_rate,agreement\n";
  auto cell = [](double v) { return std::isfinite(v) ? format_float(v) : std::string(); };
  for (const CategoryStats& c : b.rows) {
    out << c.name << ',' << c.count << ',' << cell(c.share) << ',' << cell(c.draft_not_worse) << ','
        << cell(c.draft_accept_rate) << ',' << cell(c.agreement) << '\n';
  }
}

inline nlohmann::ordered_json diagnose_summary(const DiagnoseResult& d, const std::string& policy) {
  nlohmann::ordered_json j;
  j["policy"] = policy;
  j["mode"] = d.exact ? "exact" : "monte-carlo";
  j["mismatch_states"] = d.breakdown.total;
  auto rows = nlohmann::ordered_json::array();
  for (const CategoryStats& c : d.breakdown.rows) {
    nlohmann::ordered_json r;
    r["category"] = c.name;
    r["count"] = c.count;
    r["share"] = trace_float(c.share);
    r["draft_not_worse"] = trace_float(c.draft_not_worse);
    r["draft_accept_rate"] = trace_float(c.draft_accept_rate);
    r["agreement"] = trace_float(c.agreement);
    rows.push_back(std::move(r));
  }
  j["breakdown"] = std::move(rows);
  j["gap"] = {{"lhs", trace_float(d.gap.lhs)}, {"rhs", trace_float(d.gap.rhs)}};
  j["report"] = {{"total", d.report.total},
                 {"target_correct", d.report.target_correct},
                 {"draft_correct", d.report.draft_correct},
                 {"union_correct", d.report.union_correct},
                 {"cospec_correct", d.report.cospec_correct},
                 {"recovery", trace_float(d.report.recovery.value)},
                 {"degenerate", d.report.recovery.degenerate}};
  return j;
}

/// Mismatch breakdown and complementarity report for diagnose.policy on the
/// evaluation suite; continuations use the policy under evaluation.
inline DiagnoseResult cmd_diagnose(const ExperimentConfig& cfg) {
  cfg.validate();
  const ModelPair models = build_models(cfg);
  const TaskSuite suite = resolve_eval_suite(cfg);
  if (suite.empty()) throw InputError("suite is empty");
  const CospecSettings settings = cfg.cospec_settings();
  const std::string name = cfg.str("diagnose.policy");
  const auto policy = make_policy(name, cfg);
  const auto* oracle = dynamic_cast<const OraclePolicy*>(policy.get());
  const ArbitrationPolicy& continuation = oracle ? oracle->continuation() : *policy;
  const UtilityEstimator est = estimator_for(cfg, settings, continuation);
  const std::uint64_t seed = cfg.seeds().front();
  DecodeConfig dc;
  dc.temperature = settings.temperature;
  dc.max_length = settings.max_length;

  DiagnoseResult d;
  d.exact = est.mode == EstimatorMode::exact;
  std::vector<AnalyzedState> states;
  std::vector<int> target_scores;
  std::vector<int> draft_scores;
  std::vector<int> cospec_scores;
  const std::string method = "cospec:" + name;
  for (const TaskInstance& task : suite) {
    Rng rt(method_stream("target-only", task.seed, seed));
    target_scores.push_back(score(task, generate_autoregressive(models.target, task, dc, rt).tokens,
                                  models.target.vocab()));
    Rng rd(method_stream("draft-only", task.seed, seed));
    draft_scores.push_back(score(task, generate_autoregressive(models.draft, task, dc, rd).tokens,
                                 models.target.vocab()));
    Rng rc(method_stream(method, task.seed, seed));
    const Rollout ro = run_cospec(models.draft, models.target, *policy, task, settings, rc);
    cospec_scores.push_back(ro.correct);
    for (MismatchState& m : decided_states(ro, task)) {
      const RoundRecord& rec = ro.rounds[m.round];
      AnalyzedState a;
      a.action = (*rec.actions)[m.position];
      a.accept_prob = rec.probs[m.position];
      a.utilities = branch_utilities(m, models.draft, models.target, continuation, settings, est);
      a.state = std::move(m);
      states.push_back(std::move(a));
    }
  }
  d.report = complementarity_report(target_scores, draft_scores, cospec_scores);
  std::vector<BranchUtilities> utilities;
  for (const AnalyzedState& a : states) utilities.push_back(a.utilities);
  if (!utilities.empty()) d.gap = complementarity_gap(utilities);
  if (d.exact) {
    d.breakdown = mismatch_breakdown(states);
  } else {
    d.breakdown.total = states.size();
  }

  std::ofstream csv = open_output(cfg.output_path("breakdown.csv"));
  write_breakdown(csv, d.breakdown);
  std::ofstream js = open_output(cfg.output_path("diagnose.json"));
  js << diagnose_summary(d, name).dump(2) << '\n';
  spdlog::info("diagnose {}: {} mismatch states, recovery {:.4f}", name, states.size(), d.report.recovery.value);
  return d;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct MergedRow {
  std::string method;
  std::string benchmark;
  double speed = 0.0;
  double tau = 0.0;
  double score = 0.0;
  std::size_t count = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(detail::trim_copy(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& v, const std::string& file, std::size_t line) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw InputError(file + ":" + std::to_string(line) + ": '" + v + "' is not a number");
  }
  return d;
}

/// Reads result files and averages duplicate (method, benchmark) rows.
inline std::vector<MergedRow> merge_results(const std::vector<std::string>& paths) {
  if (paths.empty()) throw InputError("report needs at least one result file");
  std::map<std::pair<std::string, std::string>, MergedRow> acc;
  for (const std::string& path : paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open result file " + path);
    std::string line;
    if (!std::getline(in, line) || detail::trim_copy(line).empty()) {
      throw InputError(path + ": empty result file");
    }
    if (detail::trim_copy(line) != kResultHeader) {
      throw InputError(path + ": unexpected header '" + detail::trim_copy(line) + "'");
    }
    std::size_t line_no = 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim_copy(line).empty()) continue;
      const auto cells = split_csv_line(detail::trim_copy(line));
      if (cells.size() != 6) {
        throw InputError(path + ":" + std::to_string(line_no) + ": expected 6 columns, found " +
                         std::to_string(cells.size()));
      }
      MergedRow& m = acc[{cells[0], cells[1]}];
      m.method = cells[0];
      m.benchmark = cells[1];
      m.speed += parse_cell(cells[2], path, line_no);
      m.tau += parse_cell(cells[3], path, line_no);
      m.score += parse_cell(cells[4], path, line_no);
      ++m.count;
      ++rows;
    }
    if (rows == 0) throw InputError(path + ": no result rows");
  }
  std::vector<MergedRow> out;
  for (auto& [key, m] : acc) {
    const double n = static_cast<double>(m.count);
    m.speed /= n;
    m.tau /= n;
    m.score /= n;
    out.push_back(m);
  }
  return out;
}

inline void write_merged(std::ostream& out, const std::vector<MergedRow>& rows) {
  out << "method,benchmark,speed,tau,score,count\n";
  for (const MergedRow& r : rows) {
    out << r.method << ',' << r.benchmark << ',' << format_float(r.speed) << ',' << format_float(r.tau) << ','
        << format_float(r.score) << ',' << r.count << '\n';
  }
}

inline std::string format_table(const std::vector<MergedRow>& rows) {
  std::vector<std::vector<std::string>> cells = {{"method", "benchmark", "speed", "tau", "score", "count"}};
  char buf[32];
  for (const MergedRow& r : rows) {
    std::vector<std::string> row = {r.method, r.benchmark};
    for (double v : {r.speed, r.tau, r.score}) {
      std::snprintf(buf, sizeof(buf), "%.4f", v);
      row.emplace_back(buf);
    }
    row.push_back(std::to_string(r.count));
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(6, 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string& v = row[c];
      const std::size_t pad = width[c] - v.size();
      if (c < 2) {
        out += v + std::string(pad, ' ');
      } else {
        out += std::string(pad, ' ') + v;
      }
      out += c + 1 < row.size() ? "  " : "\n";
    }
  }
  return out;
}

/// Merges result files into `out_csv` (when nonempty) and returns the text table.
inline std::string cmd_report(const std::vector<std::string>& paths, const std::string& out_csv) {
  const std::vector<MergedRow> rows = merge_results(paths);
  if (!out_csv.empty()) {
    std::ofstream out = open_output(out_csv);
    write_merged(out, rows);
  }
  return format_table(rows);
}

}  // namespace cospec
