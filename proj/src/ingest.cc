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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace ultra {
namespace {

std::string trim_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

bool parse_int(std::string_view s, long& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

struct RawItem {
  int grade;
  std::vector<std::pair<long, double>> features;
};

}  // namespace

Dataset parse_letor(std::istream& in, int feature_dim) {
  std::vector<std::string> qid_order;
  std::map<std::string, std::vector<RawItem>> groups;
  long max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(trim_comment(line));
    std::string tok;
    if (!(tokens >> tok)) continue;  // blank or comment-only line
    long grade = 0;
    if (!parse_int(tok, grade)) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": expected integer grade, got '" + tok + "'",
                       line_no);
    }
    if (!(tokens >> tok) || tok.rfind("qid:", 0) != 0 || tok.size() == 4) {
      throw ParseError("line " + std::to_string(line_no) + ": missing qid token",
                       line_no);
    }
    const std::string qid = tok.substr(4);
    RawItem item{static_cast<int>(std::clamp(grade, 0L, long{kMaxGrade})), {}};
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      long idx = 0;
      double val = 0.0;
      if (colon == std::string::npos ||
          !parse_int(std::string_view(tok).substr(0, colon), idx) || idx < 1 ||
          !parse_double(std::string_view(tok).substr(colon + 1), val)) {
        throw ParseError("line " + std::to_string(line_no) +
                             ": malformed feature '" + tok + "'",
                         line_no);
      }
      max_index = std::max(max_index, idx);
      item.features.emplace_back(idx, val);
    }
    auto [it, inserted] = groups.try_emplace(qid);
    if (inserted) qid_order.push_back(qid);
    it->second.push_back(std::move(item));
  }
  if (qid_order.empty()) throw EmptyInputError("LETOR input holds no records");

  Dataset data;
  data.feature_dim = feature_dim > 0 ? feature_dim : static_cast<int>(max_index);
  for (const auto& qid : qid_order) {
    Request req{qid, {}};
    const auto& raw = groups[qid];
    for (std::size_t k = 0; k < raw.size(); ++k) {
      Item item;
      item.item_id = qid + "-" + std::to_string(k);
      item.features = Vector::Zero(data.feature_dim);
      for (auto [idx, val] : raw[k].features) {
        if (idx > data.feature_dim) {
          throw ParseError("qid " + qid + ": feature index " +
                               std::to_string(idx) + " exceeds dimension " +
                               std::to_string(data.feature_dim),
                           0);
        }
        item.features[idx - 1] = val;
      }
      item.true_relevance = raw[k].grade;
      req.items.push_back(std::move(item));
    }
    data.requests.push_back(std::move(req));
  }
  return data;
}

Dataset parse_letor(const std::string& path, int feature_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_letor(in, feature_dim);
}

void write_letor(const Dataset& data, std::ostream& out) {
  std::string line;
  for (const auto& req : data.requests) {
    for (const auto& item : req.items) {
      if (!item.true_relevance) {
        throw std::invalid_argument("item " + item.item_id + " has no grade");
      }
      line = std::to_string(*item.true_relevance) + " qid:" + req.request_id;
      for (Eigen::Index k = 0; k < item.features.size(); ++k) {
        line += ' ';
        line += std::to_string(k + 1);
        line += ':';
        append_double(line, item.features[k]);
      }
      out << line << '\n';
    }
  }
}

void SyntheticConfig::validate() const {
  if (num_requests < 1) throw std::invalid_argument("num_requests must be >= 1");
  if (items_per_request < 1) {
    throw std::invalid_argument("items_per_request must be >= 1");
  }
  if (feature_dim < 1 ||
      static_cast<std::size_t>(feature_dim) != ground_truth_weights.size()) {
    throw std::invalid_argument(
        "feature_dim must equal the number of ground-truth weights");
  }
  if (grade_quantiles.size() != kMaxGrade) {
    throw std::invalid_argument("grade_quantiles needs exactly 4 cut points");
  }
  for (std::size_t k = 1; k < grade_quantiles.size(); ++k) {
    if (!(grade_quantiles[k] > grade_quantiles[k - 1])) {
      throw std::invalid_argument("grade_quantiles must be strictly increasing");
    }
  }
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Map<const Vector> w(config.ground_truth_weights.data(),
                                   config.feature_dim);
  Dataset data;
  data.feature_dim = config.feature_dim;
  const int width = std::max<int>(5, std::to_string(config.num_requests).size());
  for (int q = 0; q < config.num_requests; ++q) {
    std::string qid = std::to_string(q);
    qid = "q" + std::string(width - qid.size(), '0') + qid;
    Request req{qid, {}};
    for (int k = 0; k < config.items_per_request; ++k) {
      Item item;
      item.item_id = qid + "-" + std::to_string(k);
      item.features.resize(config.feature_dim);
      for (int f = 0; f < config.feature_dim; ++f) item.features[f] = unif(rng);
      const double score = w.dot(item.features);
      int grade = 0;
      for (double cut : config.grade_quantiles) grade += cut < score ? 1 : 0;
      item.true_relevance = grade;
      req.items.push_back(std::move(item));
    }
    data.requests.push_back(std::move(req));
  }
  return data;
}

std::vector<double> score_quantiles(const std::vector<double>& weights,
                                    const std::vector<double>& probabilities,
                                    int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> scores(samples);
  for (auto& s : scores) {
    s = 0.0;
    for (double w : weights) s += w * unif(rng);
  }
  std::sort(scores.begin(), scores.end());
  std::vector<double> cuts;
  for (double p : probabilities) {
    const auto idx = static_cast<std::size_t>(
        std::clamp(p, 0.0, 1.0) * static_cast<double>(samples - 1));
    cuts.push_back(scores[idx]);
  }
  return cuts;
}

FeatureScaler FeatureScaler::fit(const Dataset& data) {
  FeatureScaler s;
  s.lo = Vector::Constant(data.feature_dim, std::numeric_limits<double>::infinity());
  s.hi = Vector::Constant(data.feature_dim, -std::numeric_limits<double>::infinity());
  for (const auto& req : data.requests) {
    for (const auto& item : req.items) {
      s.lo = s.lo.cwiseMin(item.features);
      s.hi = s.hi.cwiseMax(item.features);
    }
  }
  return s;
}

void FeatureScaler::apply(Dataset& data) const {
  const Vector range = (hi - lo).unaryExpr(
      [](double r) { return r > 0.0 && std::isfinite(r) ? r : 1.0; });
  const Vector offset = lo.unaryExpr(
      [](double v) { return std::isfinite(v) ? v : 0.0; });
  for (auto& req : data.requests) {
    for (auto& item : req.items) {
      item.features = (item.features - offset).cwiseQuotient(range);
    }
  }
}

DatasetSplits split_by_request_hash(const Dataset& data) {
  DatasetSplits out;
  out.train.feature_dim = out.valid.feature_dim = out.test.feature_dim =
      data.feature_dim;
  for (const auto& req : data.requests) {
    switch (mix64(fnv1a64(req.request_id)) % 4) {
      case 0:
      case 1: out.train.requests.push_back(req); break;
      case 2: out.valid.requests.push_back(req); break;
      default: out.test.requests.push_back(req); break;
    }
  }
  return out;
}

void write_logs(const std::vector<ImpressionLog>& logs, std::ostream& out) {
  std::string line;
  for (const auto& log : logs) {
    const std::string rid = nlohmann::json(log.request_id).dump();
    for (const auto& e : log.entries) {
      line = "{\"request_id\":" + rid;
      line += ",\"item_id\":" + nlohmann::json(e.item_id).dump();
      line += ",\"position\":" + std::to_string(e.position);
      line += ",\"click\":" + std::to_string(e.click);
      line += ",\"dwell_time\":";
      append_double(line, e.dwell_time);
      line += ",\"label_c\":";
      append_double(line, e.label_c);
      line += "}\n";
      out << line;
    }
  }
}

void write_logs(const std::vector<ImpressionLog>& logs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_logs(logs, out);
  if (!out) throw Error("write failed for " + path);
}

std::vector<ImpressionLog> read_logs(std::istream& in) {
  using nlohmann::json;
  std::vector<ImpressionLog> logs;
  std::string line;
  std::size_t line_no = 0;
  auto field = [&](const json& rec, const char* name, auto check) -> const json& {
    auto it = rec.find(name);
    if (it == rec.end()) {
      throw SchemaError("line " + std::to_string(line_no) +
                            ": missing field '" + name + "'",
                        name);
    }
    if (!check(*it)) {
      throw SchemaError("line " + std::to_string(line_no) + ": field '" +
                            name + "' has wrong type",
                        name);
    }
    return *it;
  };
  const auto is_str = [](const json& j) { return j.is_string(); };
  const auto is_int = [](const json& j) { return j.is_number_integer(); };
  const auto is_num = [](const json& j) { return j.is_number(); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
    if (!rec.is_object()) {
      throw ParseError("line " + std::to_string(line_no) + ": not an object",
                       line_no);
    }
    const auto& rid = field(rec, "request_id", is_str).get_ref<const std::string&>();
    LogEntry e;
    e.item_id = field(rec, "item_id", is_str).get<std::string>();
    e.position = field(rec, "position", is_int).get<int>();
    e.click = field(rec, "click", is_int).get<int>();
    e.dwell_time = field(rec, "dwell_time", is_num).get<double>();
    e.label_c = field(rec, "label_c", is_num).get<double>();
    if (e.position == 1) {
      logs.push_back(ImpressionLog{rid, {}});
    } else if (logs.empty() || logs.back().request_id != rid ||
               static_cast<int>(logs.back().entries.size()) + 1 != e.position) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": position does not continue an impression",
                       line_no);
    }
    logs.back().entries.push_back(std::move(e));
  }
  for (const auto& log : logs) log.validate();
  return logs;
}

std::vector<ImpressionLog> read_logs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_logs(in);
}

}  // namespace ultra
