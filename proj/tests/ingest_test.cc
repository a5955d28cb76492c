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

#include "ultra/ingest.h"

#include <gtest/gtest.h>

#include <array>
#include <sstream>

#include "test_util.h"

namespace ultra {
namespace {

Dataset parse(const std::string& text, int dim = 0) {
  std::istringstream in(text);
  return parse_letor(in, dim);
}

TEST(ParseLetor, FillsMissingFeatures) {
  const Dataset d = parse("2 qid:1 1:0.5 3:1.0\n", 3);
  ASSERT_EQ(d.requests.size(), 1u);
  const Item& item = d.requests[0].items[0];
  EXPECT_EQ(item.true_relevance, 2);
  EXPECT_EQ(item.features, (Vector(3) << 0.5, 0.0, 1.0).finished());
}

TEST(ParseLetor, GroupsByQidInFileOrder) {
  const Dataset d = parse("1 qid:7 1:1\n0 qid:3 1:2\n3 qid:7 1:3 # trailing\n\n");
  ASSERT_EQ(d.requests.size(), 2u);
  EXPECT_EQ(d.requests[0].request_id, "7");
  EXPECT_EQ(d.requests[0].items.size(), 2u);
  EXPECT_EQ(d.requests[1].request_id, "3");
  EXPECT_EQ(d.feature_dim, 1);
}

TEST(ParseLetor, ClampsGrades) {
  const Dataset d = parse("9 qid:1 1:1\n-2 qid:1 1:1\n");
  EXPECT_EQ(d.requests[0].items[0].true_relevance, 4);
  EXPECT_EQ(d.requests[0].items[1].true_relevance, 0);
}

TEST(ParseLetor, MalformedGradeNamesLine) {
  try {
    parse("x qid:1 1:0.5\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}

TEST(ParseLetor, ErrorLineCountsBlankLines) {
  try {
    parse("1 qid:1 1:0.5\n\n2 1:0.5\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseLetor, EmptyInputThrows) {
  EXPECT_THROW(parse(""), EmptyInputError);
  EXPECT_THROW(parse("# only a comment\n"), EmptyInputError);
}

TEST(ParseLetor, RoundTripsDenseDatasets) {
  const Dataset d = testing::small_synthetic(12, 5, 4, 3);
  std::ostringstream out;
  write_letor(d, out);
  const Dataset back = parse(out.str(), 4);
  ASSERT_EQ(back.requests.size(), d.requests.size());
  for (std::size_t q = 0; q < d.requests.size(); ++q) {
    ASSERT_EQ(back.requests[q].items.size(), d.requests[q].items.size());
    for (std::size_t k = 0; k < d.requests[q].items.size(); ++k) {
      EXPECT_EQ(back.requests[q].items[k].features, d.requests[q].items[k].features);
      EXPECT_EQ(back.requests[q].items[k].true_relevance,
                d.requests[q].items[k].true_relevance);
    }
  }
}

SyntheticConfig synthetic_config(int requests, int items) {
  SyntheticConfig c;
  c.num_requests = requests;
  c.items_per_request = items;
  c.feature_dim = 3;
  c.ground_truth_weights = {1.0, -0.5, 2.0};
  c.grade_quantiles = score_quantiles(c.ground_truth_weights, {0.2, 0.4, 0.6, 0.8},
                                      200000, 17);
  c.rng_seed = 42;
  return c;
}

TEST(GenerateSynthetic, Deterministic) {
  const SyntheticConfig c = synthetic_config(20, 7);
  const Dataset a = generate_synthetic(c);
  const Dataset b = generate_synthetic(c);
  std::ostringstream sa, sb;
  write_letor(a, sa);
  write_letor(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(GenerateSynthetic, QuantileCutsGiveUniformGrades) {
  const Dataset d = generate_synthetic(synthetic_config(1000, 100));
  std::array<int, 5> counts{};
  for (const auto& r : d.requests) {
    for (const auto& item : r.items) ++counts[*item.true_relevance];
  }
  for (int g = 0; g < 5; ++g) EXPECT_NEAR(counts[g] / 1e5, 0.2, 0.03) << "grade " << g;
}

TEST(GenerateSynthetic, ZeroWeightsGiveEqualGrades) {
  SyntheticConfig c = synthetic_config(5, 5);
  c.ground_truth_weights = {0.0, 0.0, 0.0};
  c.grade_quantiles = {-1.0, 1.0, 2.0, 3.0};
  const Dataset d = generate_synthetic(c);
  for (const auto& r : d.requests) {
    for (const auto& item : r.items) EXPECT_EQ(item.true_relevance, 1);
  }
}

TEST(GenerateSynthetic, RejectsEmptyShapes) {
  SyntheticConfig c = synthetic_config(0, 5);
  EXPECT_THROW(generate_synthetic(c), std::invalid_argument);
  c = synthetic_config(5, 0);
  EXPECT_THROW(generate_synthetic(c), std::invalid_argument);
  c = synthetic_config(5, 5);
  c.grade_quantiles = {0.0, 0.0, 1.0, 2.0};
  EXPECT_THROW(generate_synthetic(c), std::invalid_argument);
}

TEST(SplitByRequestHash, RoughlyHalfQuarterQuarter) {
  const Dataset d = generate_synthetic(synthetic_config(4000, 1));
  const DatasetSplits s = split_by_request_hash(d);
  EXPECT_EQ(s.train.requests.size() + s.valid.requests.size() + s.test.requests.size(),
            4000u);
  EXPECT_NEAR(s.train.requests.size() / 4000.0, 0.5, 0.03);
  EXPECT_NEAR(s.valid.requests.size() / 4000.0, 0.25, 0.03);
}

TEST(FeatureScaler, MapsTrainRangeToUnitInterval) {
  Dataset d = parse("1 qid:1 1:2 2:5\n0 qid:1 1:4 2:5\n");
  const FeatureScaler s = FeatureScaler::fit(d);
  s.apply(d);
  EXPECT_DOUBLE_EQ(d.requests[0].items[0].features[0], 0.0);
  EXPECT_DOUBLE_EQ(d.requests[0].items[1].features[0], 1.0);
  EXPECT_DOUBLE_EQ(d.requests[0].items[1].features[1], 0.0);  // constant column
}

std::vector<ImpressionLog> random_logs(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::vector<ImpressionLog> logs;
  for (int k = 0; k < n; ++k) {
    ImpressionLog log;
    log.request_id = "q\"" + std::to_string(k % 17);
    for (int p = 1; p <= 1 + k % 6; ++p) {
      const int click = (k + p) % 3 == 0;
      const double dwell = click ? u(rng) : 0.0;
      log.entries.push_back({"item-" + std::to_string(p), p, click, dwell,
                             click ? 1.0 + dwell / std::exp(3.0) : 0.0});
    }
    logs.push_back(log);
  }
  return logs;
}

TEST(Logs, RoundTripThousandLogs) {
  const auto logs = random_logs(1000, 5);
  std::stringstream buf;
  write_logs(logs, buf);
  EXPECT_EQ(read_logs(buf), logs);
}

TEST(Logs, EmptyListIsEmptyFile) {
  testing::TempDir dir("logs");
  write_logs({}, dir.file("empty.jsonl"));
  EXPECT_EQ(testing::slurp(dir.file("empty.jsonl")), "");
  EXPECT_TRUE(read_logs(dir.file("empty.jsonl")).empty());
}

TEST(Logs, FieldOrderIsFixed) {
  std::stringstream buf;
  write_logs({{"q", {{"a", 1, 1, 0.5, 1.25}}}}, buf);
  EXPECT_EQ(buf.str(),
            "{\"request_id\":\"q\",\"item_id\":\"a\",\"position\":1,\"click\":1,"
            "\"dwell_time\":0.5,\"label_c\":1.25}\n");
}

TEST(Logs, MissingFieldNamesField) {
  std::stringstream buf(
      "{\"request_id\":\"q\",\"item_id\":\"a\",\"position\":1,\"click\":1,"
      "\"label_c\":1.25}\n");
  try {
    read_logs(buf);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "dwell_time");
  }
}

TEST(Logs, PositionGapIsRejected) {
  std::stringstream buf(
      "{\"request_id\":\"q\",\"item_id\":\"a\",\"position\":1,\"click\":0,"
      "\"dwell_time\":0,\"label_c\":0}\n"
      "{\"request_id\":\"q\",\"item_id\":\"b\",\"position\":3,\"click\":0,"
      "\"dwell_time\":0,\"label_c\":0}\n");
  EXPECT_THROW(read_logs(buf), ParseError);
}

TEST(Logs, MissingFileThrows) {
  EXPECT_THROW(read_logs(std::string("/nonexistent/dir/logs.jsonl")), Error);
}

}  // namespace
}  // namespace ultra
