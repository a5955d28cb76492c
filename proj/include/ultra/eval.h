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

// Ranking metrics and experiment reports.

#ifndef ULTRA_EVAL_H_
#define ULTRA_EVAL_H_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ultra/core.h"
#include "ultra/simulate.h"

namespace ultra {

// Grades are given in ranked order (element 0 at rank 1). Gain 2^y - 1,
// discount 1/log2(1 + rank); 0 when the ideal DCG is 0.
double dcg_at_k(std::span<const int> ranked_grades, int k);
double ndcg_at_k(std::span<const int> ranked_grades, int k);

// Gain-weighted mean position of relevant items; nullopt when no item has
// positive gain.
std::optional<double> arp(std::span<const int> ranked_grades);

// Grades of request items in the order induced by `scores`.
std::vector<int> ranked_grades(const Request& request, const Vector& scores);

// Mean NDCG@k over requests, each ranked by its scores.
double mean_ndcg_at_k(const Dataset& data, const std::vector<Vector>& scores, int k);

// Mean over requests of the summed synthesized feedback on the top k of the
// score-induced ranking (truncated to the simulator's positions), resampling
// clicks and dwell times `trials` times per request.
double reward_at_k(const Dataset& data, const std::vector<Vector>& scores,
                   const SimConfig& config, int k, int trials, Rng& rng);

// Analytic expectation of reward_at_k.
double expected_reward_at_k(const Dataset& data, const std::vector<Vector>& scores,
                            const SimConfig& config, int k);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one run
  int runs = 0;
};

Aggregate aggregate_runs(std::span<const double> values);

struct ReportRow {
  std::string method;
  std::string metric;
  int k = 0;
  Aggregate value;
};

struct EvalReport {
  std::vector<ReportRow> rows;

  // method,metric,k,mean,std,runs
  void write_csv(std::ostream& out) const;
  static EvalReport read_csv(std::istream& in);
  const ReportRow* find(const std::string& method, const std::string& metric,
                        int k) const;
};

// Long-format sweep table: one row per (parameter value, method, metric, k)
// with the gain of the method's mean over a baseline method.
struct SweepRow {
  std::string parameter;
  double value = 0.0;
  std::string method;
  std::string metric;
  int k = 0;
  Aggregate result;
  double gain = 0.0;
};

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

// Shortest round-trip decimal of `v`.
std::string format_double(double v);

}  // namespace ultra

#endif  // ULTRA_EVAL_H_
