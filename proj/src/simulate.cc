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

#include "ultra/simulate.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace ultra {

void SimConfig::validate() const {
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be nonnegative");
  if (!(click_noise >= 0.0 && click_noise < 1.0)) {
    throw std::invalid_argument("click_noise must lie in [0,1)");
  }
  if (!std::isfinite(delta)) throw std::invalid_argument("delta must be finite");
  if (bias_curve.size() == 0) throw std::invalid_argument("bias_curve is empty");
  for (Eigen::Index i = 0; i < bias_curve.size(); ++i) {
    if (!(bias_curve[i] > 0.0 && bias_curve[i] <= 1.0)) {
      throw std::invalid_argument("bias_curve entries must lie in (0,1]");
    }
  }
  for (double s : gmm_sigma) {
    if (!(s > 0.0)) throw std::invalid_argument("gmm_sigma must be positive");
  }
}

SimConfig SimConfig::with_positions(int positions) {
  if (positions < 1) throw std::invalid_argument("positions must be >= 1");
  SimConfig c;
  c.bias_curve.resize(positions);
  for (int i = 0; i < positions; ++i) c.bias_curve[i] = 1.0 / (i + 1);
  return c;
}

double synthesize_label(int click, double dwell, double delta) {
  return click + dwell / std::exp(delta);
}

LinearScorer train_initial_ranker(const Dataset& data, double fraction,
                                  std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("fraction must lie in (0,1]");
  }
  std::vector<const Item*> items;
  for (const auto& req : data.requests) {
    for (const auto& item : req.items) {
      if (!item.true_relevance) {
        throw std::invalid_argument("initial ranker needs graded items");
      }
      items.push_back(&item);
    }
  }
  Rng rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  const auto n = std::min(
      items.size(), static_cast<std::size_t>(std::ceil(fraction * items.size())));
  items.resize(n);

  std::set<int> grades;
  for (const Item* item : items) grades.insert(*item->true_relevance);
  if (grades.size() < 2) {
    throw DegenerateSampleError("initial-ranker sample has fewer than 2 grades");
  }

  const int d = data.feature_dim;
  Matrix design(n, d + 1);
  Vector target(n);
  for (std::size_t r = 0; r < n; ++r) {
    design.row(r).head(d) = items[r]->features.transpose();
    design(r, d) = 1.0;
    target[r] = *items[r]->true_relevance;
  }
  // A light ridge keeps tiny samples (n <= d) solvable.
  Matrix normal = design.transpose() * design;
  normal.diagonal().head(d).array() += 1e-3;
  const Vector solution = normal.ldlt().solve(design.transpose() * target);
  return LinearScorer{solution.head(d), solution[d]};
}

std::vector<std::size_t> display_order(const Request& request,
                                       const LinearScorer& scorer,
                                       int positions) {
  std::vector<double> scores;
  std::vector<std::string> ids;
  for (const auto& item : request.items) {
    scores.push_back(scorer.score(item.features));
    ids.push_back(item.item_id);
  }
  auto order = ranked_order(scores, ids);
  if (static_cast<int>(order.size()) > positions) order.resize(positions);
  return order;
}

double examination_prob(int position, const SimConfig& config) {
  if (position < 1 || position > config.positions()) {
    throw std::out_of_range("position " + std::to_string(position) +
                            " outside 1.." + std::to_string(config.positions()));
  }
  return std::pow(config.bias_curve[position - 1], config.eta);
}

double perceived_relevance(int grade, double click_noise) {
  if (grade < 0 || grade > kMaxGrade) {
    throw std::out_of_range("grade " + std::to_string(grade) + " outside [0,4]");
  }
  return click_noise +
         (1.0 - click_noise) * (std::exp2(grade) - 1.0) / (std::exp2(kMaxGrade) - 1.0);
}

double expected_feedback(int grade, int position, const SimConfig& config) {
  const double p_click =
      examination_prob(position, config) * perceived_relevance(grade, config.click_noise);
  const double mu = config.gmm_mu[grade];
  const double sigma = config.gmm_sigma[grade];
  const double mean_dwell = std::exp(mu + 0.5 * sigma * sigma);
  return p_click * (1.0 + mean_dwell / std::exp(config.delta));
}

namespace {

int grade_of(const Item& item) {
  if (!item.true_relevance) {
    throw std::invalid_argument("item " + item.item_id + " has no grade");
  }
  return *item.true_relevance;
}

void check_display(std::span<const std::size_t> displayed, const Request& request,
                   const SimConfig& config) {
  if (static_cast<int>(displayed.size()) > config.positions()) {
    throw std::invalid_argument("displayed list longer than the position count");
  }
  for (auto idx : displayed) {
    if (idx >= request.items.size()) {
      throw std::invalid_argument("displayed index outside the request");
    }
  }
}

}  // namespace

ImpressionLog simulate_session(const Request& request,
                               std::span<const std::size_t> displayed,
                               const SimConfig& config, Rng& rng,
                               const LabelCombiner& combine) {
  check_display(displayed, request, config);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ImpressionLog log{request.request_id, {}};
  for (std::size_t k = 0; k < displayed.size(); ++k) {
    const Item& item = request.items[displayed[k]];
    const int grade = grade_of(item);
    const int position = static_cast<int>(k) + 1;
    const double p = examination_prob(position, config) *
                     perceived_relevance(grade, config.click_noise);
    LogEntry e;
    e.item_id = item.item_id;
    e.position = position;
    // Both draws happen unconditionally so the stream layout does not depend
    // on earlier outcomes.
    const double u = unif(rng);
    const double z = normal(rng);
    e.click = u < p ? 1 : 0;
    if (e.click) {
      e.dwell_time = std::exp(config.gmm_mu[grade] + config.gmm_sigma[grade] * z);
    }
    e.label_c = combine ? combine(e.click, e.dwell_time)
                        : synthesize_label(e.click, e.dwell_time, config.delta);
    if (!e.click) e.label_c = 0.0;
    log.entries.push_back(std::move(e));
  }
  return log;
}

ImpressionLog simulate_noise_free_session(const Request& request,
                                          std::span<const std::size_t> displayed,
                                          const SimConfig& config, Rng& rng) {
  check_display(displayed, request, config);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ImpressionLog log{request.request_id, {}};
  for (std::size_t k = 0; k < displayed.size(); ++k) {
    const Item& item = request.items[displayed[k]];
    const int grade = grade_of(item);
    const int position = static_cast<int>(k) + 1;
    const bool examined = unif(rng) < examination_prob(position, config);
    LogEntry e;
    e.item_id = item.item_id;
    e.position = position;
    e.click = examined && grade > 0 ? 1 : 0;
    e.label_c = examined ? grade : 0.0;
    log.entries.push_back(std::move(e));
  }
  return log;
}

std::vector<ImpressionLog> simulate_logs(const Dataset& data,
                                         const LinearScorer& scorer,
                                         const SimConfig& config,
                                         int sessions_per_request) {
  config.validate();
  if (sessions_per_request < 1) {
    throw std::invalid_argument("sessions_per_request must be >= 1");
  }
  std::vector<ImpressionLog> logs;
  logs.reserve(data.requests.size() * sessions_per_request);
  for (const auto& req : data.requests) {
    const auto shown = display_order(req, scorer, config.positions());
    Rng rng(derive_seed(config.rng_seed, req.request_id));
    for (int s = 0; s < sessions_per_request; ++s) {
      logs.push_back(simulate_session(req, shown, config, rng));
    }
  }
  return logs;
}

}  // namespace ultra
