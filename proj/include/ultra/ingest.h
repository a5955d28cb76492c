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

#ifndef ULTRA_INGEST_H_
#define ULTRA_INGEST_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ultra/core.h"

namespace ultra {

// LETOR / SVMLight ranking text: `<grade> qid:<id> <idx>:<val> ... [# ...]`.
// Feature indices are 1-based; missing indices read as 0. Grades are clamped
// to [0,4]. Items are grouped by qid in order of first appearance. When
// `feature_dim` is 0 it is taken from the largest index seen.
Dataset parse_letor(std::istream& in, int feature_dim = 0);
Dataset parse_letor(const std::string& path, int feature_dim = 0);

// Dense LETOR serialization; every item must carry a grade.
void write_letor(const Dataset& data, std::ostream& out);

struct SyntheticConfig {
  int num_requests = 0;
  int items_per_request = 0;
  int feature_dim = 0;
  std::vector<double> ground_truth_weights;
  std::vector<double> grade_quantiles;  // 4 strictly increasing cut points
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Features i.i.d. uniform [0,1]; grade = number of cut points strictly below
// w.x. Deterministic for a fixed seed.
Dataset generate_synthetic(const SyntheticConfig& config);

// Cut points at the given quantiles of w.x for x ~ U[0,1]^d, estimated from
// `samples` Monte-Carlo draws.
std::vector<double> score_quantiles(const std::vector<double>& weights,
                                    const std::vector<double>& probabilities,
                                    int samples, std::uint64_t seed);

// Per-feature min-max scaling fit on one split and applied to others.
struct FeatureScaler {
  Vector lo;
  Vector hi;

  static FeatureScaler fit(const Dataset& data);
  void apply(Dataset& data) const;
};

struct DatasetSplits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// 50/25/25 split keyed by a hash of the request id.
DatasetSplits split_by_request_hash(const Dataset& data);

// Impression logs as JSON lines, one entry per line:
//   {"request_id":..,"item_id":..,"position":..,"click":..,
//    "dwell_time":..,"label_c":..}
// A new impression begins at position 1.
void write_logs(const std::vector<ImpressionLog>& logs, std::ostream& out);
void write_logs(const std::vector<ImpressionLog>& logs, const std::string& path);
std::vector<ImpressionLog> read_logs(std::istream& in);
std::vector<ImpressionLog> read_logs(const std::string& path);

}  // namespace ultra

#endif  // ULTRA_INGEST_H_
