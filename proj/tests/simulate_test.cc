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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "test_util.h"
#include "ultra/eval.h"

namespace ultra {
namespace {

Request graded_request(const std::vector<int>& grades) {
  Request r;
  r.request_id = "req";
  for (std::size_t k = 0; k < grades.size(); ++k) {
    r.items.push_back({"i" + std::to_string(k), Vector::Zero(1), grades[k]});
  }
  return r;
}

std::vector<std::size_t> identity(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

TEST(ExaminationProb, Examples) {
  SimConfig c = SimConfig::with_positions(5);
  c.eta = 0.0;
  for (int i = 1; i <= 5; ++i) EXPECT_DOUBLE_EQ(examination_prob(i, c), 1.0);
  c.eta = 1.0;
  EXPECT_DOUBLE_EQ(examination_prob(3, c), 1.0 / 3.0);
  c.eta = 2.0;
  EXPECT_DOUBLE_EQ(examination_prob(2, c), 0.25);
  EXPECT_THROW(examination_prob(0, c), std::out_of_range);
  EXPECT_THROW(examination_prob(6, c), std::out_of_range);
}

TEST(PerceivedRelevance, Examples) {
  EXPECT_DOUBLE_EQ(perceived_relevance(4, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(perceived_relevance(4, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(perceived_relevance(0, 0.1), 0.1);
  EXPECT_NEAR(perceived_relevance(2, 0.1), 0.28, 1e-15);
  EXPECT_THROW(perceived_relevance(5, 0.1), std::out_of_range);
  EXPECT_THROW(perceived_relevance(-1, 0.1), std::out_of_range);
}

TEST(SimulateSession, VanishingExaminationGivesNoClicks) {
  SimConfig c = SimConfig::with_positions(4);
  c.bias_curve = Vector::Constant(4, 0.9);
  c.eta = std::numeric_limits<double>::infinity();
  const Request r = graded_request({4, 4, 3, 2});
  Rng rng(1);
  for (int s = 0; s < 100; ++s) {
    for (const auto& e : simulate_session(r, identity(4), c, rng).entries) {
      EXPECT_EQ(e.click, 0);
      EXPECT_EQ(e.label_c, 0.0);
    }
  }
}

TEST(SimulateSession, ClickRateMatchesBrowsingModel) {
  SimConfig c = SimConfig::with_positions(5);
  const std::vector<int> grades{0, 1, 2, 3, 4};
  const Request r = graded_request(grades);
  const int n = 100000;
  std::vector<int> clicks(5, 0);
  Rng rng(7);
  for (int s = 0; s < n; ++s) {
    const auto log = simulate_session(r, identity(5), c, rng);
    for (int k = 0; k < 5; ++k) clicks[k] += log.entries[k].click;
  }
  for (int k = 0; k < 5; ++k) {
    const double p = examination_prob(k + 1, c) * perceived_relevance(grades[k], 0.1);
    const double sd = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(clicks[k] / double(n), p, 3 * sd) << "position " << k + 1;
  }
}

TEST(SimulateSession, LogDwellIsNormalPerGrade) {
  SimConfig c = SimConfig::with_positions(1);
  c.gmm_sigma = {0.5, 1.0, 1.5, 0.8, 1.2};
  const int samples = 10000;
  for (int g = 0; g <= 4; ++g) {
    const Request r = graded_request({g});
    Rng rng(100 + g);
    std::vector<double> logs;
    while (int(logs.size()) < samples) {
      const auto e = simulate_session(r, identity(1), c, rng).entries[0];
      if (e.click) logs.push_back(std::log(e.dwell_time));
    }
    double mean = 0.0;
    for (double v : logs) mean += v;
    mean /= samples;
    EXPECT_NEAR(mean, c.gmm_mu[g], 3 * c.gmm_sigma[g] / std::sqrt(double(samples)));
    // Jarque-Bera against chi-square(2) at alpha = 0.001.
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : logs) {
      const double d = v - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m2 /= samples;
    m3 /= samples;
    m4 /= samples;
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2);
    const double jb = samples / 6.0 * (skew * skew + 0.25 * (kurt - 3) * (kurt - 3));
    EXPECT_LT(jb, -2.0 * std::log(0.001)) << "grade " << g;
  }
}

TEST(SimulateSession, LabelPositiveIffClick) {
  const Dataset d = testing::small_synthetic(50, 10, 3, 9);
  SimConfig c = SimConfig::with_positions(10);
  Rng rng(3);
  for (const auto& r : d.requests) {
    const auto log = simulate_session(r, identity(10), c, rng);
    for (const auto& e : log.entries) {
      EXPECT_EQ(e.label_c > 0, e.click == 1);
      EXPECT_EQ(e.dwell_time > 0, e.click == 1);
      if (e.click) EXPECT_DOUBLE_EQ(e.label_c, 1.0 + e.dwell_time / std::exp(3.0));
    }
  }
}

TEST(SimulateSession, CustomCombinerIsUsed) {
  SimConfig c = SimConfig::with_positions(1);
  c.bias_curve[0] = 1.0;
  const Request r = graded_request({4});
  Rng rng(1);
  const auto log = simulate_session(r, identity(1), c, rng,
                                    [](int click, double) { return 5.0 * click; });
  EXPECT_EQ(log.entries[0].label_c, 5.0);
}

TEST(SimulateSession, MissingGradeThrows) {
  Request r = graded_request({1, 2});
  r.items[1].true_relevance.reset();
  SimConfig c = SimConfig::with_positions(2);
  Rng rng(1);
  EXPECT_THROW(simulate_session(r, identity(2), c, rng), std::invalid_argument);
}

TEST(SimulateSession, TooManyDisplayedPositionsThrows) {
  const Request r = graded_request({1, 2, 3});
  SimConfig c = SimConfig::with_positions(2);
  Rng rng(1);
  EXPECT_THROW(simulate_session(r, identity(3), c, rng), std::invalid_argument);
}

TEST(ExpectedFeedback, MatchesMonteCarloMean) {
  SimConfig c = SimConfig::with_positions(3);
  const Request r = graded_request({3, 1, 4});
  Rng rng(11);
  const int n = 200000;
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (int s = 0; s < n; ++s) {
    const auto log = simulate_session(r, identity(3), c, rng);
    for (int k = 0; k < 3; ++k) {
      sum[k] += log.entries[k].label_c;
      sq[k] += log.entries[k].label_c * log.entries[k].label_c;
    }
  }
  for (int k = 0; k < 3; ++k) {
    const double mean = sum[k] / n;
    const double sd = std::sqrt((sq[k] / n - mean * mean) / n);
    EXPECT_NEAR(mean, expected_feedback(*r.items[k].true_relevance, k + 1, c), 4 * sd);
  }
}

TEST(SimulateLogs, PerRequestStreamsIgnoreRequestOrder) {
  Dataset d = testing::small_synthetic(6, 5, 2, 4);
  LinearScorer scorer{Vector::Ones(2), 0.0};
  SimConfig c = SimConfig::with_positions(5);
  c.rng_seed = 21;
  const auto a = simulate_logs(d, scorer, c, 3);
  std::reverse(d.requests.begin(), d.requests.end());
  const auto b = simulate_logs(d, scorer, c, 3);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const std::size_t mirrored = (a.size() / 3 - 1 - k / 3) * 3 + k % 3;
    EXPECT_EQ(a[k], b[mirrored]);
  }
}

TEST(InitialRanker, FullSampleOrdersByGrade) {
  const Dataset d = testing::small_synthetic(40, 10, 5, 13);
  const LinearScorer s = train_initial_ranker(d, 1.0, 1);
  double total = 0.0;
  for (const auto& r : d.requests) {
    Vector scores(r.items.size());
    for (std::size_t k = 0; k < r.items.size(); ++k) scores[k] = s.score(r.items[k].features);
    total += ndcg_at_k(ranked_grades(r, scores), 10);
  }
  EXPECT_GT(total / d.requests.size(), 0.95);
}

TEST(InitialRanker, DeterministicForSeed) {
  const Dataset d = testing::small_synthetic(100, 10, 5, 13);
  const LinearScorer a = train_initial_ranker(d, 0.01, 9);
  const LinearScorer b = train_initial_ranker(d, 0.01, 9);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.intercept, b.intercept);
}

TEST(InitialRanker, EqualGradesAreDegenerate) {
  Request r = graded_request({2, 2, 2, 2});
  Dataset d;
  d.feature_dim = 1;
  d.requests.push_back(r);
  EXPECT_THROW(train_initial_ranker(d, 1.0, 1), DegenerateSampleError);
  EXPECT_THROW(train_initial_ranker(d, 0.0, 1), std::invalid_argument);
}

TEST(DisplayOrder, TruncatesToPositions) {
  Request r = graded_request({0, 1, 2, 3});
  for (std::size_t k = 0; k < 4; ++k) r.items[k].features[0] = double(k);
  LinearScorer s{Vector::Ones(1), 0.0};
  EXPECT_EQ(display_order(r, s, 2), (std::vector<std::size_t>{3, 2}));
}

}  // namespace
}  // namespace ultra
