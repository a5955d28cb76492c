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

// Config-driven experiment pipeline: simulate -> estimate -> train-eval,
// plus report rendering and eta/delta sweeps.

#ifndef ULTRA_EXPERIMENT_H_
#define ULTRA_EXPERIMENT_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ultra/core.h"
#include "ultra/em.h"
#include "ultra/eval.h"
#include "ultra/ingest.h"
#include "ultra/rank.h"
#include "ultra/simulate.h"

namespace ultra {

struct DatasetSource {
  std::string kind = "synthetic";  // "synthetic" or "letor"
  std::string letor_train, letor_valid, letor_test;
  int letor_feature_dim = 0;
  int num_requests = 2000;
  int items_per_request = 20;
  int feature_dim = 10;
  std::vector<double> weights;  // empty: drawn from the seed
  std::vector<double> grade_probabilities{0.2, 0.4, 0.6, 0.8};
  bool normalize = false;
};

struct SimSettings {
  SimConfig sim = SimConfig::with_positions(10);
  int sessions_per_request = 5;
  double initial_ranker_fraction = 0.01;
};

struct EvalSettings {
  std::vector<int> ks{3, 5, 10};
  int reward_trials = 100;
  bool expected_reward = false;  // analytic Reward@k instead of resampling
  std::string validation_metric = "reward";  // or "ndcg"
  int validation_k = 10;
};

struct SweepSettings {
  std::vector<double> eta{0.0, 0.5, 1.0, 1.5, 2.0};
  std::vector<double> delta{2.0, 3.0, 4.0};
  std::string baseline = "NaivePairwise";
};

struct ExperimentConfig {
  DatasetSource dataset;
  SimSettings sim;
  EMConfig em;
  bool em_warm_start = false;
  TrainConfig train;
  std::vector<double> learning_rate_grid;  // empty: train.learning_rate only
  std::map<std::string, TrainConfig> train_per_method;
  std::vector<LossVariant> methods{LossVariant::kOpt,           LossVariant::kBayesIPW,
                                   LossVariant::kIPW,           LossVariant::kNaivePairwise,
                                   LossVariant::kNaivePointwise, LossVariant::kOraclePairwise};
  EvalSettings eval;
  int repeats = 10;
  std::string output_dir = "ultra_out";
  std::uint64_t seed = 1;
  SweepSettings sweep;

  // Missing keys keep their defaults; unknown keys and bad values raise
  // SchemaError naming the dotted field.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  void validate() const;

  const TrainConfig& train_for(LossVariant v) const;
  // Hash of everything that determines the logs.
  std::string data_hash() const;
  // data_hash plus the estimation settings.
  std::string estimate_hash() const;
  std::string config_hash() const;
};

// Sets a dotted key ("em.alpha") to `value`, parsed as JSON when possible and
// kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>&
                                 overrides = {});

struct ExperimentData {
  DatasetSplits splits;
  int positions = 0;
};

ExperimentData prepare_data(const ExperimentConfig& config);

struct SimulateSummary {
  std::size_t train_sessions = 0;
  std::size_t valid_sessions = 0;
  std::size_t test_sessions = 0;
};

struct EstimateSummary {
  int epochs_run = 0;
  bool converged = false;
  double loglik = 0.0;
  std::vector<double> theta_abs_error;  // against the simulator's theta^eta
};

// Each verb reads and writes under config.output_dir.
SimulateSummary cmd_simulate(const ExperimentConfig& config);
EstimateSummary cmd_estimate(const ExperimentConfig& config);
EvalReport cmd_train_eval(const ExperimentConfig& config, int jobs = 1);
void cmd_report(const std::string& output_dir, std::ostream& out);
// simulate + estimate + train-eval per eta and per delta value, into
// output_dir/sweep/<parameter>_<value>; writes sweep_eta.csv and
// sweep_delta.csv.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, int jobs = 1);

}  // namespace ultra

#endif  // ULTRA_EXPERIMENT_H_
