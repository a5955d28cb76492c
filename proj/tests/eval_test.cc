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

#include "ultra/eval.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "test_util.h"

namespace ultra {
namespace {

double brute_dcg(const std::vector<int>& g, int k) {
  double s = 0.0;
  for (int r = 0; r < k && r < int(g.size()); ++r) {
    s += (std::pow(2.0, g[r]) - 1.0) / std::log2(r + 2.0);
  }
  return s;
}

// Ideal DCG as the maximum over every permutation.
double brute_ndcg(std::vector<int> g, int k) {
  const double dcg = brute_dcg(g, k);
  std::vector<int> p = g;
  std::sort(p.begin(), p.end());
  double best = 0.0;
  do {
    best = std::max(best, brute_dcg(p, k));
  } while (std::next_permutation(p.begin(), p.end()));
  return best == 0.0 ? 0.0 : dcg / best;
}

TEST(Ndcg, Examples) {
  const std::vector<int> sorted{4, 3, 3, 1, 0};
  EXPECT_DOUBLE_EQ(ndcg_at_k(sorted, 5), 1.0);
  const std::vector<int> g{0, 1, 3};
  EXPECT_NEAR(dcg_at_k(g, 3), 1.0 / std::log2(3.0) + 3.5, 1e-12);
  EXPECT_NEAR(dcg_at_k(g, 3), 4.1309, 5e-5);
  EXPECT_NEAR(ndcg_at_k(g, 3), 0.5413, 5e-5);
  const std::vector<int> zeros{0, 0, 0};
  EXPECT_EQ(ndcg_at_k(zeros, 3), 0.0);
}

TEST(Ndcg, MatchesBruteForceOracle) {
  Rng rng(12);
  std::uniform_int_distribution<int> grade(0, 4), len(1, 8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> g(len(rng));
    for (int& v : g) v = grade(rng);
    const int k = 1 + trial % 10;
    const double n = ndcg_at_k(g, k);
    EXPECT_NEAR(n, brute_ndcg(g, k), 1e-12);
    EXPECT_GE(n, 0.0);
    EXPECT_LE(n, 1.0 + 1e-12);
  }
}

TEST(Arp, Examples) {
  const std::vector<int> one{1, 0, 0};
  EXPECT_DOUBLE_EQ(*arp(one), 1.0);
  const std::vector<int> two{2, 0, 2};
  EXPECT_DOUBLE_EQ(*arp(two), 2.0);
  const std::vector<int> weighted{2, 0, 0, 1};
  EXPECT_DOUBLE_EQ(*arp(weighted), 1.75);
  const std::vector<int> none{0, 0};
  EXPECT_FALSE(arp(none).has_value());
}

TEST(RankedGrades, FollowsScoresWithIdTieBreak) {
  Request r;
  r.request_id = "q";
  r.items.push_back({"b", Vector::Zero(1), 1});
  r.items.push_back({"a", Vector::Zero(1), 3});
  r.items.push_back({"c", Vector::Zero(1), 0});
  Vector s(3);
  s << 0.5, 0.5, 0.9;
  EXPECT_EQ(ranked_grades(r, s), (std::vector<int>{0, 3, 1}));
}

TEST(Aggregate, Examples) {
  const std::vector<double> one{0.5};
  EXPECT_EQ(aggregate_runs(one).mean, 0.5);
  EXPECT_EQ(aggregate_runs(one).std, 0.0);
  EXPECT_EQ(aggregate_runs(one).runs, 1);
  const std::vector<double> two{0.4, 0.6};
  EXPECT_NEAR(aggregate_runs(two).mean, 0.5, 1e-15);
  EXPECT_NEAR(aggregate_runs(two).std, 0.1414, 5e-5);
  EXPECT_NEAR(aggregate_runs(two).std, std::sqrt(0.02), 1e-15);
  const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  EXPECT_NEAR(aggregate_runs(flat).std, 0.0, 1e-15);
  EXPECT_THROW(aggregate_runs(std::vector<double>{}), std::invalid_argument);
}

std::vector<Vector> grade_scores(const Dataset& d, double sign) {
  std::vector<Vector> out;
  for (const auto& r : d.requests) {
    Vector s(r.items.size());
    for (std::size_t k = 0; k < r.items.size(); ++k) {
      s[Eigen::Index(k)] = sign * *r.items[k].true_relevance;
    }
    out.push_back(s);
  }
  return out;
}

TEST(Reward, VanishingExaminationGivesZero) {
  const Dataset d = testing::small_synthetic(10, 6, 2, 3);
  SimConfig c = SimConfig::with_positions(5);
  c.bias_curve.setConstant(0.8);
  c.eta = std::numeric_limits<double>::infinity();
  Rng rng(1);
  EXPECT_EQ(reward_at_k(d, grade_scores(d, 1.0), c, 5, 50, rng), 0.0);
  EXPECT_EQ(expected_reward_at_k(d, grade_scores(d, 1.0), c, 5), 0.0);
}

TEST(Reward, StableAcrossSeeds) {
  const Dataset d = testing::small_synthetic(5, 10, 2, 4);
  const SimConfig c = SimConfig::with_positions(10);
  const auto scores = grade_scores(d, 1.0);
  const int trials = 10000;
  Rng a(1), b(2);
  const double ra = reward_at_k(d, scores, c, 10, trials, a);
  const double rb = reward_at_k(d, scores, c, 10, trials, b);
  // Per-session reward variance bounded by a pilot estimate.
  Rng pilot(3);
  double sum = 0.0, sq = 0.0;
  for (int t = 0; t < 2000; ++t) {
    const double v = reward_at_k(d, scores, c, 10, 1, pilot);
    sum += v;
    sq += v * v;
  }
  const double var = sq / 2000 - (sum / 2000) * (sum / 2000);
  const double sd_diff = std::sqrt(2.0 * var / trials);
  EXPECT_LT(std::abs(ra - rb), 3 * sd_diff);
  EXPECT_NEAR(ra, expected_reward_at_k(d, scores, c, 10), 3 * sd_diff);
}

TEST(Reward, GradeOrderBeatsReverseOrder) {
  const Dataset d = testing::small_synthetic(20, 10, 2, 6);
  const SimConfig c = SimConfig::with_positions(10);
  Rng a(5), b(5);
  const double good = reward_at_k(d, grade_scores(d, 1.0), c, 10, 10000, a);
  const double bad = reward_at_k(d, grade_scores(d, -1.0), c, 10, 10000, b);
  EXPECT_GT(good, bad);
  EXPECT_GT(expected_reward_at_k(d, grade_scores(d, 1.0), c, 10),
            expected_reward_at_k(d, grade_scores(d, -1.0), c, 10));
}

TEST(Reward, MonotoneInKForFixedTrials) {
  const Dataset d = testing::small_synthetic(8, 10, 2, 7);
  const SimConfig c = SimConfig::with_positions(10);
  const auto scores = grade_scores(d, 1.0);
  double prev = 0.0;
  for (int k = 1; k <= 10; ++k) {
    Rng rng(42);
    const double r = reward_at_k(d, scores, c, k, 200, rng);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(Reward, RejectsBadArguments) {
  const Dataset d = testing::small_synthetic(2, 4, 2, 7);
  const SimConfig c = SimConfig::with_positions(3);
  Rng rng(1);
  EXPECT_THROW(reward_at_k(d, grade_scores(d, 1.0), c, 4, 10, rng), std::invalid_argument);
  EXPECT_THROW(reward_at_k(d, grade_scores(d, 1.0), c, 2, 0, rng), std::invalid_argument);
  EXPECT_THROW(reward_at_k(d, {}, c, 2, 10, rng), std::invalid_argument);
}

TEST(Report, CsvRoundTrip) {
  EvalReport report;
  report.rows.push_back({"IPW", "ndcg", 10, {0.1 + 0.2, 0.0123, 10}});
  report.rows.push_back({"Opt", "reward", 3, {12.5, 1e-17, 1}});
  std::stringstream ss;
  report.write_csv(ss);
  EXPECT_EQ(ss.str().substr(0, 29), "method,metric,k,mean,std,runs");
  const EvalReport back = EvalReport::read_csv(ss);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].value.mean, 0.1 + 0.2);
  EXPECT_EQ(back.rows[1].value.std, 1e-17);
  ASSERT_NE(back.find("Opt", "reward", 3), nullptr);
  EXPECT_EQ(back.find("Opt", "reward", 5), nullptr);
  std::stringstream bad("method,metric,k,mean,std,runs\nIPW,ndcg,x,1,2,3\n");
  EXPECT_THROW(EvalReport::read_csv(bad), ParseError);
  std::stringstream header("nope\n");
  EXPECT_THROW(EvalReport::read_csv(header), ParseError);
}

TEST(Report, SweepCsv) {
  std::ostringstream out;
  write_sweep_csv({{"eta", 0.5, "Opt", "reward", 10, {2.0, 0.5, 3}, 0.25}}, out);
  EXPECT_EQ(out.str(),
            "parameter,value,method,metric,k,mean,std,runs,gain\n"
            "eta,0.5,Opt,reward,10,2,0.5,3,0.25\n");
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(0.1 + 0.2), "0.30000000000000004");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

}  // namespace
}  // namespace ultra
