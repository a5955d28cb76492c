/*
 * Copyright 2026 The ultra-pair Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// ultra-pair <simulate|estimate|train-eval|report|sweep> --config <path>
//            [--jobs N] [--seed S] [--key=value ...]

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ultra/experiment.h"

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// "--a.b=v" or "--a.b v" pairs left over after the known flags.
bool collect_overrides(const std::vector<std::string>& extras,
                       std::vector<std::pair<std::string, std::string>>& out) {
  for (std::size_t k = 0; k < extras.size(); ++k) {
    const std::string& arg = extras[k];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) {
      std::cerr << "ultra-pair: unexpected argument '" << arg << "'\n";
      return false;
    }
    const std::size_t eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else if (k + 1 < extras.size()) {
      out.emplace_back(arg.substr(2), extras[++k]);
    } else {
      std::cerr << "ultra-pair: override '" << arg << "' has no value\n";
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbiased pairwise learning-to-rank experiments"};
  app.require_subcommand(1);
  app.allow_extras();

  std::string config_path;
  std::string dir;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;

  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"simulate", "simulate biased feedback logs for every split"},
      {"estimate", "estimate propensities and relevance regressors from train logs"},
      {"train-eval", "train every method and write report.csv"},
      {"report", "print the report table of an output directory"},
      {"sweep", "run the eta and delta grids"}};
  for (const auto& [name, help] : verbs) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--jobs", jobs, "parallel jobs")->check(CLI::PositiveNumber);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s; seed_set = true; },
        "global seed");
    if (name == "report") sub->add_option("--dir", dir, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsageError;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string verb = sub->get_name();

  std::vector<std::pair<std::string, std::string>> overrides;
  if (!collect_overrides(sub->remaining(), overrides)) return kUsageError;
  if (seed_set) overrides.emplace_back("seed", std::to_string(seed));

  if (verb == "report" && config_path.empty()) {
    if (dir.empty()) {
      std::cerr << "ultra-pair report: give --dir or --config\n";
      return kUsageError;
    }
  } else if (config_path.empty()) {
    std::cerr << "ultra-pair " << verb << ": --config is required\n";
    return kUsageError;
  }

  ultra::ExperimentConfig config;
  if (!config_path.empty()) {
    try {
      config = ultra::load_config(config_path, overrides);
    } catch (const ultra::SchemaError& e) {
      std::cerr << "ultra-pair: invalid config: " << e.what() << '\n';
      return kUsageError;
    } catch (const std::exception& e) {
      std::cerr << "ultra-pair: " << e.what() << '\n';
      return kUsageError;
    }
  }

  try {
    if (verb == "simulate") {
      const auto s = ultra::cmd_simulate(config);
      std::cout << "sessions: train " << s.train_sessions << ", valid " << s.valid_sessions
                << ", test " << s.test_sessions << '\n';
    } else if (verb == "estimate") {
      const auto s = ultra::cmd_estimate(config);
      std::cout << "epochs " << s.epochs_run << (s.converged ? " (converged)" : " (max epochs)")
                << ", loglik " << s.loglik << '\n';
      std::cout << "theta abs error:";
      for (double e : s.theta_abs_error) std::cout << ' ' << e;
      std::cout << '\n';
    } else if (verb == "train-eval") {
      ultra::cmd_train_eval(config, jobs);
      ultra::cmd_report(config.output_dir, std::cout);
    } else if (verb == "report") {
      ultra::cmd_report(dir.empty() ? config.output_dir : dir, std::cout);
    } else if (verb == "sweep") {
      const auto rows = ultra::cmd_sweep(config, jobs);
      std::cout << rows.size() << " sweep rows written to " << config.output_dir << '\n';
    }
  } catch (const ultra::SchemaError& e) {
    std::cerr << "ultra-pair " << verb << ": invalid config: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "ultra-pair " << verb << ": " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
