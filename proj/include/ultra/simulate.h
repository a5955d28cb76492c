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

#ifndef ULTRA_SIMULATE_H_
#define ULTRA_SIMULATE_H_

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ultra/core.h"

namespace ultra {

// Browsing model for biased feedback: position-based examination, noisy
// perceived relevance, log-normal dwell time per grade, and a synthesized
// label combining click and dwell.
struct SimConfig {
  double eta = 1.0;          // position-bias severity
  double click_noise = 0.1;  // click probability floor for grade 0
  double delta = 3.0;        // dwell weight in the synthesized label
  Vector bias_curve;         // base propensities per position, in (0,1]
  std::array<double, 5> gmm_mu{2.0, 2.5, 3.0, 3.5, 4.0};
  std::array<double, 5> gmm_sigma{1.0, 1.0, 1.0, 1.0, 1.0};
  std::uint64_t rng_seed = 0;

  int positions() const { return static_cast<int>(bias_curve.size()); }
  void validate() const;

  // bias_curve = 1/i for i = 1..positions, other fields at their defaults.
  static SimConfig with_positions(int positions);
};

// Combines click and dwell time into the continuous label.
using LabelCombiner = std::function<double(int click, double dwell)>;

// click + dwell / e^delta.
double synthesize_label(int click, double dwell, double delta);

struct LinearScorer {
  Vector weights;
  double intercept = 0.0;

  double score(const Vector& x) const { return weights.dot(x) + intercept; }
};

// Least-squares regression of grade on features over a `fraction` sample of
// items. Throws DegenerateSampleError when the sample has < 2 distinct grades.
LinearScorer train_initial_ranker(const Dataset& data, double fraction,
                                  std::uint64_t seed);

// Indices into request.items in display order (descending score, ties by
// item id), truncated to `positions`.
std::vector<std::size_t> display_order(const Request& request,
                                       const LinearScorer& scorer,
                                       int positions);

double examination_prob(int position, const SimConfig& config);
double perceived_relevance(int grade, double click_noise);

// Expected synthesized feedback of an item of `grade` shown at `position`.
double expected_feedback(int grade, int position, const SimConfig& config);

// One impression of `displayed` (indices into request.items).
ImpressionLog simulate_session(const Request& request,
                               std::span<const std::size_t> displayed,
                               const SimConfig& config, Rng& rng,
                               const LabelCombiner& combine = {});

// Noise-free pairwise position-based model: an examined item shows its
// grade as the label, an unexamined one shows 0.
ImpressionLog simulate_noise_free_session(const Request& request,
                                          std::span<const std::size_t> displayed,
                                          const SimConfig& config, Rng& rng);

// `sessions_per_request` impressions of every request, each request with its
// own RNG stream derived from (config.rng_seed, request_id).
std::vector<ImpressionLog> simulate_logs(const Dataset& data,
                                         const LinearScorer& scorer,
                                         const SimConfig& config,
                                         int sessions_per_request);

}  // namespace ultra

#endif  // ULTRA_SIMULATE_H_
