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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace ultra {
namespace {

double grade_gain(int y) { return std::exp2(double(y)) - 1.0; }

std::vector<std::size_t> displayed(const Request& request, const Vector& scores,
                                   int positions) {
  if (scores.size() != static_cast<Eigen::Index>(request.items.size())) {
    throw std::invalid_argument("request " + request.request_id +
                                ": score count differs from item count");
  }
  std::vector<std::string> ids;
  ids.reserve(request.items.size());
  for (const auto& item : request.items) ids.push_back(item.item_id);
  auto order = ranked_order(std::span<const double>(scores.data(), scores.size()), ids);
  if (static_cast<int>(order.size()) > positions) order.resize(positions);
  return order;
}

void check_scores(const Dataset& data, const std::vector<Vector>& scores) {
  if (scores.size() != data.requests.size()) {
    throw std::invalid_argument("need one score vector per request");
  }
}

}  // namespace

double dcg_at_k(std::span<const int> ranked_grades, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  double dcg = 0.0;
  const std::size_t n = std::min<std::size_t>(k, ranked_grades.size());
  for (std::size_t r = 0; r < n; ++r) {
    dcg += grade_gain(ranked_grades[r]) / std::log2(double(r) + 2.0);
  }
  return dcg;
}

double ndcg_at_k(std::span<const int> ranked_grades, int k) {
  std::vector<int> ideal(ranked_grades.begin(), ranked_grades.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg_at_k(ideal, k);
  if (idcg == 0.0) return 0.0;
  return dcg_at_k(ranked_grades, k) / idcg;
}

std::optional<double> arp(std::span<const int> ranked_grades) {
  double num = 0.0, den = 0.0;
  for (std::size_t r = 0; r < ranked_grades.size(); ++r) {
    const double g = grade_gain(ranked_grades[r]);
    num += double(r + 1) * g;
    den += g;
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

std::vector<int> ranked_grades(const Request& request, const Vector& scores) {
  const auto order =
      displayed(request, scores, static_cast<int>(request.items.size()));
  std::vector<int> out;
  out.reserve(order.size());
  for (std::size_t idx : order) {
    const auto& g = request.items[idx].true_relevance;
    if (!g) throw std::invalid_argument("item " + request.items[idx].item_id +
                                        " has no grade");
    out.push_back(*g);
  }
  return out;
}

double mean_ndcg_at_k(const Dataset& data, const std::vector<Vector>& scores, int k) {
  check_scores(data, scores);
  if (data.requests.empty()) throw EmptyInputError("no requests to evaluate");
  double total = 0.0;
  for (std::size_t q = 0; q < data.requests.size(); ++q) {
    total += ndcg_at_k(ranked_grades(data.requests[q], scores[q]), k);
  }
  return total / double(data.requests.size());
}

double reward_at_k(const Dataset& data, const std::vector<Vector>& scores,
                   const SimConfig& config, int k, int trials, Rng& rng) {
  config.validate();
  check_scores(data, scores);
  if (k < 1 || k > config.positions()) {
    throw std::invalid_argument("k must be in 1..positions");
  }
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (data.requests.empty()) throw EmptyInputError("no requests to evaluate");
  double total = 0.0;
  for (std::size_t q = 0; q < data.requests.size(); ++q) {
    const auto order = displayed(data.requests[q], scores[q], config.positions());
    double sum = 0.0;
    for (int t = 0; t < trials; ++t) {
      const ImpressionLog log = simulate_session(data.requests[q], order, config, rng);
      for (const auto& e : log.entries) {
        if (e.position <= k) sum += e.label_c;
      }
    }
    total += sum / double(trials);
  }
  return total / double(data.requests.size());
}

double expected_reward_at_k(const Dataset& data, const std::vector<Vector>& scores,
                            const SimConfig& config, int k) {
  config.validate();
  check_scores(data, scores);
  if (k < 1 || k > config.positions()) {
    throw std::invalid_argument("k must be in 1..positions");
  }
  if (data.requests.empty()) throw EmptyInputError("no requests to evaluate");
  double total = 0.0;
  for (std::size_t q = 0; q < data.requests.size(); ++q) {
    const auto& request = data.requests[q];
    const auto order = displayed(request, scores[q], config.positions());
    for (std::size_t r = 0; r < order.size() && int(r) < k; ++r) {
      const auto& g = request.items[order[r]].true_relevance;
      if (!g) throw std::invalid_argument("item has no grade");
      total += expected_feedback(*g, int(r) + 1, config);
    }
  }
  return total / double(data.requests.size());
}

Aggregate aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate_runs needs >= 1 value");
  Aggregate a;
  a.runs = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / double(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / double(values.size() - 1));
  }
  return a;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "method,metric,k,mean,std,runs\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.metric << ',' << r.k << ',' << format_double(r.value.mean)
        << ',' << format_double(r.value.std) << ',' << r.value.runs << '\n';
  }
}

EvalReport EvalReport::read_csv(std::istream& in) {
  EvalReport report;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) || line != "method,metric,k,mean,std,runs") {
    throw ParseError("report csv: unexpected header", 1);
  }
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) {
      throw ParseError("report csv line " + std::to_string(lineno) + ": expected 6 fields",
                       lineno);
    }
    ReportRow r;
    r.method = f[0];
    r.metric = f[1];
    try {
      r.k = std::stoi(f[2]);
      r.value.mean = std::stod(f[3]);
      r.value.std = std::stod(f[4]);
      r.value.runs = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw ParseError("report csv line " + std::to_string(lineno) + ": bad number",
                       lineno);
    }
    report.rows.push_back(r);
  }
  return report;
}

const ReportRow* EvalReport::find(const std::string& method, const std::string& metric,
                                  int k) const {
  for (const auto& r : rows) {
    if (r.method == method && r.metric == metric && r.k == k) return &r;
  }
  return nullptr;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "parameter,value,method,metric,k,mean,std,runs,gain\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << format_double(r.value) << ',' << r.method << ','
        << r.metric << ',' << r.k << ',' << format_double(r.result.mean) << ','
        << format_double(r.result.std) << ',' << r.result.runs << ','
        << format_double(r.gain) << '\n';
  }
}

}  // namespace ultra
