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

#include "ultra/experiment.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace ultra {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) {
      throw SchemaError(where("") + " must be an object", path_);
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw SchemaError(where(key) + " has the wrong type", where(key));
    }
  }

  bool has(const char* key) const { return doc_.contains(key); }
  void mark(const char* key) { seen_.insert(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Reader(doc_.contains(key) ? doc_.at(key) : kEmpty, where(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) {
        throw SchemaError("unknown config field '" + where(key) + "'", where(key));
      }
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void field_check(const std::string& field, F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(field + ": " + e.what(), field);
  }
}

std::string hex_hash(const json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

const char* gamma_target_name(GammaTarget t) {
  return t == GammaTarget::kMarginal ? "marginal" : "both_examined";
}

const char* gain_name(GainMode g) {
  return g == GainMode::kLinear ? "linear" : "exponential";
}

void read_train(Reader r, TrainConfig& t) {
  r.get("learning_rate", t.learning_rate);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("hidden", t.hidden);
  std::string gain = gain_name(t.gain);
  r.get("gain", gain);
  if (gain == "linear") {
    t.gain = GainMode::kLinear;
  } else if (gain == "exponential") {
    t.gain = GainMode::kExponential;
  } else {
    throw SchemaError(r.where("gain") + " must be linear or exponential", r.where("gain"));
  }
  r.finish();
}

json train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"hidden", t.hidden},
          {"gain", gain_name(t.gain)}};
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

fs::path out_dir(const ExperimentConfig& c) { return fs::path(c.output_dir); }

json read_manifest(const ExperimentConfig& c) {
  const fs::path p = out_dir(c) / "manifest.json";
  if (!fs::exists(p)) {
    throw Error("no manifest in " + c.output_dir + "; run simulate first");
  }
  return read_json_file(p);
}

void require_hash(const json& manifest, const char* key, const std::string& expected,
                  const std::string& what) {
  const std::string got = manifest.value(key, std::string());
  if (got != expected) {
    throw Error(what + " has " + key + " '" + got + "' but the current config gives '" +
                expected + "'; outputs from different configurations cannot be mixed");
  }
}

std::vector<ImpressionLog> read_split_logs(const ExperimentConfig& c, const char* split) {
  return read_logs((out_dir(c) / "logs" / (std::string(split) + ".jsonl")).string());
}

SimConfig split_sim(const ExperimentConfig& c, const char* split) {
  SimConfig s = c.sim.sim;
  s.rng_seed = derive_seed(c.seed, std::string("sim/") + split);
  return s;
}

template <typename F>
void run_parallel(std::size_t n, int jobs, F&& work) {
  const int lanes = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (lanes == 1) {
    for (std::size_t k = 0; k < n; ++k) work(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> threads;
  for (int t = 0; t < lanes; ++t) {
    threads.emplace_back([&] {
      for (std::size_t k; (k = next.fetch_add(1)) < n;) {
        try {
          work(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  ExperimentConfig c;
  Reader root(doc, "");

  Reader d = root.child("dataset");
  d.get("source", c.dataset.kind);
  {
    Reader l = d.child("letor");
    l.get("train", c.dataset.letor_train);
    l.get("valid", c.dataset.letor_valid);
    l.get("test", c.dataset.letor_test);
    l.get("feature_dim", c.dataset.letor_feature_dim);
    l.finish();
  }
  {
    Reader s = d.child("synthetic");
    s.get("num_requests", c.dataset.num_requests);
    s.get("items_per_request", c.dataset.items_per_request);
    s.get("feature_dim", c.dataset.feature_dim);
    s.get("weights", c.dataset.weights);
    s.get("grade_probabilities", c.dataset.grade_probabilities);
    s.finish();
  }
  d.get("normalize", c.dataset.normalize);
  d.finish();

  Reader s = root.child("sim");
  int positions = c.sim.sim.positions();
  s.get("positions", positions);
  if (positions < 1) throw SchemaError("sim.positions must be >= 1", "sim.positions");
  SimConfig sim = SimConfig::with_positions(positions);
  s.get("eta", sim.eta);
  s.get("click_noise", sim.click_noise);
  s.get("delta", sim.delta);
  if (s.has("bias_curve")) {
    std::vector<double> curve;
    s.get("bias_curve", curve);
    if (int(curve.size()) != positions) {
      throw SchemaError("sim.bias_curve must have sim.positions entries", "sim.bias_curve");
    }
    sim.bias_curve = Eigen::Map<const Vector>(curve.data(), positions);
  } else {
    s.mark("bias_curve");
  }
  s.get("gmm_mu", sim.gmm_mu);
  s.get("gmm_sigma", sim.gmm_sigma);
  s.get("sessions_per_request", c.sim.sessions_per_request);
  s.get("initial_ranker_fraction", c.sim.initial_ranker_fraction);
  s.finish();
  c.sim.sim = sim;

  Reader e = root.child("em");
  e.get("alpha", c.em.alpha);
  e.get("batch_size", c.em.batch_size);
  e.get("max_epochs", c.em.max_epochs);
  e.get("tolerance", c.em.tolerance);
  e.get("bernoulli_sampling", c.em.bernoulli_sampling);
  std::string target = gamma_target_name(c.em.gamma_target);
  e.get("gamma_target", target);
  if (target == "marginal") {
    c.em.gamma_target = GammaTarget::kMarginal;
  } else if (target == "both_examined") {
    c.em.gamma_target = GammaTarget::kBothExamined;
  } else {
    throw SchemaError("em.gamma_target must be marginal or both_examined",
                      "em.gamma_target");
  }
  e.get("max_pairs_per_request", c.em.max_pairs_per_request);
  e.get("max_regression_pairs", c.em.max_regression_pairs);
  e.get("warm_start", c.em_warm_start);
  {
    Reader r = e.child("regressor");
    r.get("hidden", c.em.regressor.hidden);
    r.get("epochs", c.em.regressor.epochs);
    r.get("batch_size", c.em.regressor.batch_size);
    r.get("learning_rate", c.em.regressor.learning_rate);
    r.finish();
  }
  e.finish();

  {
    Reader t = root.child("train");
    json rest = json::object();
    const json& tdoc = doc.contains("train") ? doc.at("train") : json::object();
    if (tdoc.is_object()) {
      for (const auto& [key, value] : tdoc.items()) {
        if (key != "learning_rate_grid" && key != "per_method") rest[key] = value;
      }
    }
    read_train(Reader(rest, "train"), c.train);
    t.get("learning_rate_grid", c.learning_rate_grid);
    for (const char* key : {"learning_rate", "epochs", "batch_size", "hidden", "gain"}) {
      t.mark(key);
    }
    if (t.has("per_method")) {
      const json& pm = t.raw("per_method");
      if (!pm.is_object()) {
        throw SchemaError("train.per_method must be an object", "train.per_method");
      }
      for (const auto& [name, value] : pm.items()) {
        try {
          parse_variant(name);
        } catch (const std::invalid_argument&) {
          throw SchemaError("train.per_method: unknown method '" + name + "'",
                            "train.per_method." + name);
        }
        json merged = train_json(c.train);
        if (!value.is_object()) {
          throw SchemaError("train.per_method." + name + " must be an object",
                            "train.per_method." + name);
        }
        for (const auto& [k, v] : value.items()) merged[k] = v;
        TrainConfig tc = c.train;
        read_train(Reader(merged, "train.per_method." + name), tc);
        c.train_per_method[name] = tc;
      }
    }
    t.finish();
  }

  if (root.has("methods")) {
    std::vector<std::string> names;
    root.get("methods", names);
    c.methods.clear();
    for (const auto& n : names) {
      try {
        c.methods.push_back(parse_variant(n));
      } catch (const std::invalid_argument& ex) {
        throw SchemaError(std::string("methods: ") + ex.what(), "methods");
      }
    }
  } else {
    root.mark("methods");
  }

  Reader ev = root.child("eval");
  ev.get("ks", c.eval.ks);
  ev.get("reward_trials", c.eval.reward_trials);
  ev.get("expected_reward", c.eval.expected_reward);
  ev.get("validation_metric", c.eval.validation_metric);
  ev.get("validation_k", c.eval.validation_k);
  ev.finish();

  root.get("repeats", c.repeats);
  root.get("output_dir", c.output_dir);
  root.get("seed", c.seed);

  Reader sw = root.child("sweep");
  sw.get("eta", c.sweep.eta);
  sw.get("delta", c.sweep.delta);
  sw.get("baseline", c.sweep.baseline);
  sw.finish();

  root.finish();
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json doc;
  doc["dataset"] = {
      {"source", dataset.kind},
      {"letor",
       {{"train", dataset.letor_train},
        {"valid", dataset.letor_valid},
        {"test", dataset.letor_test},
        {"feature_dim", dataset.letor_feature_dim}}},
      {"synthetic",
       {{"num_requests", dataset.num_requests},
        {"items_per_request", dataset.items_per_request},
        {"feature_dim", dataset.feature_dim},
        {"weights", dataset.weights},
        {"grade_probabilities", dataset.grade_probabilities}}},
      {"normalize", dataset.normalize}};
  const auto& sc = sim.sim;
  doc["sim"] = {{"positions", sc.positions()},
                {"eta", sc.eta},
                {"click_noise", sc.click_noise},
                {"delta", sc.delta},
                {"bias_curve", std::vector<double>(sc.bias_curve.data(),
                                                   sc.bias_curve.data() + sc.positions())},
                {"gmm_mu", sc.gmm_mu},
                {"gmm_sigma", sc.gmm_sigma},
                {"sessions_per_request", sim.sessions_per_request},
                {"initial_ranker_fraction", sim.initial_ranker_fraction}};
  doc["em"] = {{"alpha", em.alpha},
               {"batch_size", em.batch_size},
               {"max_epochs", em.max_epochs},
               {"tolerance", em.tolerance},
               {"bernoulli_sampling", em.bernoulli_sampling},
               {"gamma_target", gamma_target_name(em.gamma_target)},
               {"max_pairs_per_request", em.max_pairs_per_request},
               {"max_regression_pairs", em.max_regression_pairs},
               {"warm_start", em_warm_start},
               {"regressor",
                {{"hidden", em.regressor.hidden},
                 {"epochs", em.regressor.epochs},
                 {"batch_size", em.regressor.batch_size},
                 {"learning_rate", em.regressor.learning_rate}}}};
  json t = train_json(train);
  t["learning_rate_grid"] = learning_rate_grid;
  json pm = json::object();
  for (const auto& [name, tc] : train_per_method) pm[name] = train_json(tc);
  t["per_method"] = pm;
  doc["train"] = t;
  std::vector<std::string> names;
  for (LossVariant v : methods) names.emplace_back(variant_name(v));
  doc["methods"] = names;
  doc["eval"] = {{"ks", eval.ks},
                 {"reward_trials", eval.reward_trials},
                 {"expected_reward", eval.expected_reward},
                 {"validation_metric", eval.validation_metric},
                 {"validation_k", eval.validation_k}};
  doc["repeats"] = repeats;
  doc["output_dir"] = output_dir;
  doc["seed"] = seed;
  doc["sweep"] = {{"eta", sweep.eta}, {"delta", sweep.delta}, {"baseline", sweep.baseline}};
  return doc;
}

void ExperimentConfig::validate() const {
  if (dataset.kind == "letor") {
    if (dataset.letor_train.empty()) {
      throw SchemaError("dataset.letor.train: path is required", "dataset.letor.train");
    }
    if (dataset.letor_valid.empty()) {
      throw SchemaError("dataset.letor.valid: path is required", "dataset.letor.valid");
    }
    if (dataset.letor_test.empty()) {
      throw SchemaError("dataset.letor.test: path is required", "dataset.letor.test");
    }
  } else if (dataset.kind == "synthetic") {
    if (dataset.num_requests < 1 || dataset.items_per_request < 1 ||
        dataset.feature_dim < 1) {
      throw SchemaError("dataset.synthetic sizes must be >= 1", "dataset.synthetic");
    }
    if (!dataset.weights.empty() && int(dataset.weights.size()) != dataset.feature_dim) {
      throw SchemaError("dataset.synthetic.weights must have feature_dim entries",
                        "dataset.synthetic.weights");
    }
    if (dataset.grade_probabilities.size() != 4 ||
        !std::is_sorted(dataset.grade_probabilities.begin(),
                        dataset.grade_probabilities.end()) ||
        dataset.grade_probabilities.front() <= 0.0 ||
        dataset.grade_probabilities.back() >= 1.0) {
      throw SchemaError("dataset.synthetic.grade_probabilities must be 4 increasing "
                        "values in (0,1)",
                        "dataset.synthetic.grade_probabilities");
    }
  } else {
    throw SchemaError("dataset.source must be synthetic or letor", "dataset.source");
  }
  field_check("sim", [&] { sim.sim.validate(); });
  if (sim.sessions_per_request < 1) {
    throw SchemaError("sim.sessions_per_request must be >= 1", "sim.sessions_per_request");
  }
  if (!(sim.initial_ranker_fraction > 0.0 && sim.initial_ranker_fraction <= 1.0)) {
    throw SchemaError("sim.initial_ranker_fraction must be in (0,1]",
                      "sim.initial_ranker_fraction");
  }
  field_check("em", [&] { em.validate(); });
  field_check("train", [&] { train.validate(); });
  for (const auto& [name, tc] : train_per_method) {
    field_check("train.per_method." + name, [&] { tc.validate(); });
  }
  for (double lr : learning_rate_grid) {
    if (!(lr > 0.0)) {
      throw SchemaError("train.learning_rate_grid entries must be positive",
                        "train.learning_rate_grid");
    }
  }
  if (methods.empty()) throw SchemaError("methods must not be empty", "methods");
  if (eval.ks.empty()) throw SchemaError("eval.ks must not be empty", "eval.ks");
  for (int k : eval.ks) {
    if (k < 1 || k > sim.sim.positions()) {
      throw SchemaError("eval.ks entries must be in 1..sim.positions", "eval.ks");
    }
  }
  if (eval.validation_k < 1 || eval.validation_k > sim.sim.positions()) {
    throw SchemaError("eval.validation_k must be in 1..sim.positions", "eval.validation_k");
  }
  if (eval.reward_trials < 1) {
    throw SchemaError("eval.reward_trials must be >= 1", "eval.reward_trials");
  }
  if (eval.validation_metric != "reward" && eval.validation_metric != "ndcg") {
    throw SchemaError("eval.validation_metric must be reward or ndcg",
                      "eval.validation_metric");
  }
  if (repeats < 1) throw SchemaError("repeats must be >= 1", "repeats");
  if (output_dir.empty()) throw SchemaError("output_dir must not be empty", "output_dir");
  try {
    parse_variant(sweep.baseline);
  } catch (const std::invalid_argument&) {
    throw SchemaError("sweep.baseline is not a method name", "sweep.baseline");
  }
}

const TrainConfig& ExperimentConfig::train_for(LossVariant v) const {
  auto it = train_per_method.find(std::string(variant_name(v)));
  return it == train_per_method.end() ? train : it->second;
}

std::string ExperimentConfig::data_hash() const {
  const json doc = to_json();
  return hex_hash({{"dataset", doc["dataset"]}, {"sim", doc["sim"]}, {"seed", seed}});
}

std::string ExperimentConfig::estimate_hash() const {
  json em_doc = to_json()["em"];
  em_doc.erase("warm_start");
  return hex_hash({{"data", data_hash()}, {"em", em_doc}});
}

std::string ExperimentConfig::config_hash() const {
  json doc = to_json();
  doc.erase("output_dir");
  return hex_hash(doc);
}

void apply_override(json& doc, const std::string& key, const std::string& value) {
  if (key.empty()) throw SchemaError("empty override key", key);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw SchemaError("malformed override key '" + key + "'", key);
    if (!node->is_object()) {
      throw SchemaError("override '" + key + "' descends into a non-object", key);
    }
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>&
                                 overrides) {
  json doc = read_json_file(path);
  for (const auto& [k, v] : overrides) apply_override(doc, k, v);
  return ExperimentConfig::from_json(doc);
}

ExperimentData prepare_data(const ExperimentConfig& c) {
  ExperimentData out;
  out.positions = c.sim.sim.positions();
  if (c.dataset.kind == "synthetic") {
    SyntheticConfig sc;
    sc.num_requests = c.dataset.num_requests;
    sc.items_per_request = c.dataset.items_per_request;
    sc.feature_dim = c.dataset.feature_dim;
    sc.ground_truth_weights = c.dataset.weights;
    if (sc.ground_truth_weights.empty()) {
      Rng rng(derive_seed(c.seed, "weights"));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int k = 0; k < sc.feature_dim; ++k) sc.ground_truth_weights.push_back(normal(rng));
    }
    sc.grade_quantiles = score_quantiles(sc.ground_truth_weights,
                                         c.dataset.grade_probabilities, 200000,
                                         derive_seed(c.seed, "quantiles"));
    sc.rng_seed = derive_seed(c.seed, "dataset");
    out.splits = split_by_request_hash(generate_synthetic(sc));
  } else {
    auto parse = [&](const std::string& path, const char* field, int dim) {
      if (!fs::exists(path)) {
        throw SchemaError(std::string(field) + ": no such file '" + path + "'", field);
      }
      return parse_letor(path, dim);
    };
    int dim = c.dataset.letor_feature_dim;
    out.splits.train = parse(c.dataset.letor_train, "dataset.letor.train", dim);
    out.splits.valid = parse(c.dataset.letor_valid, "dataset.letor.valid", dim);
    out.splits.test = parse(c.dataset.letor_test, "dataset.letor.test", dim);
    const int widest = std::max({out.splits.train.feature_dim, out.splits.valid.feature_dim,
                                 out.splits.test.feature_dim});
    if (dim == 0 && (out.splits.train.feature_dim != widest ||
                     out.splits.valid.feature_dim != widest ||
                     out.splits.test.feature_dim != widest)) {
      out.splits.train = parse_letor(c.dataset.letor_train, widest);
      out.splits.valid = parse_letor(c.dataset.letor_valid, widest);
      out.splits.test = parse_letor(c.dataset.letor_test, widest);
    }
  }
  if (c.dataset.normalize) {
    const FeatureScaler scaler = FeatureScaler::fit(out.splits.train);
    scaler.apply(out.splits.train);
    scaler.apply(out.splits.valid);
    scaler.apply(out.splits.test);
  }
  for (const Dataset* d : {&out.splits.train, &out.splits.valid, &out.splits.test}) {
    if (d->requests.empty()) throw EmptyInputError("a data split has no requests");
  }
  return out;
}

SimulateSummary cmd_simulate(const ExperimentConfig& c) {
  c.validate();
  const ExperimentData data = prepare_data(c);
  const LinearScorer scorer = train_initial_ranker(
      data.splits.train, c.sim.initial_ranker_fraction, derive_seed(c.seed, "initial_ranker"));
  fs::create_directories(out_dir(c) / "logs");
  SimulateSummary summary;
  json seeds;
  const std::pair<const char*, const Dataset*> splits[] = {
      {"train", &data.splits.train}, {"valid", &data.splits.valid}, {"test", &data.splits.test}};
  for (const auto& [name, split] : splits) {
    const SimConfig sim = split_sim(c, name);
    const auto logs = simulate_logs(*split, scorer, sim, c.sim.sessions_per_request);
    write_logs(logs, (out_dir(c) / "logs" / (std::string(name) + ".jsonl")).string());
    seeds[std::string("sim/") + name] = sim.rng_seed;
    const std::size_t n = logs.size();
    if (std::string(name) == "train") summary.train_sessions = n;
    if (std::string(name) == "valid") summary.valid_sessions = n;
    if (std::string(name) == "test") summary.test_sessions = n;
  }
  seeds["initial_ranker"] = derive_seed(c.seed, "initial_ranker");
  seeds["global"] = c.seed;
  json manifest = {{"config_hash", c.config_hash()},
                   {"data_hash", c.data_hash()},
                   {"seeds", seeds},
                   {"config", c.to_json()}};
  write_json_file(out_dir(c) / "manifest.json", manifest);
  // A new simulation invalidates any earlier estimate in this directory.
  fs::remove(out_dir(c) / "estimate.json");
  return summary;
}

EstimateSummary cmd_estimate(const ExperimentConfig& c) {
  c.validate();
  json manifest = read_manifest(c);
  require_hash(manifest, "data_hash", c.data_hash(), (out_dir(c) / "manifest.json").string());
  const ExperimentData data = prepare_data(c);
  const auto logs = read_split_logs(c, "train");
  if (logs.empty()) throw EmptyInputError("training logs are empty");

  std::optional<EMWarmStart> warm;
  const fs::path params_path = out_dir(c) / "params.json";
  if (c.em_warm_start && fs::exists(params_path)) {
    EMWarmStart w;
    w.params = load_params(params_path.string());
    w.models.g = Regressor::load((out_dir(c) / "g.model").string());
    w.models.h = Regressor::load((out_dir(c) / "h.model").string());
    warm = std::move(w);
  }
  EMConfig em = c.em;
  em.rng_seed = derive_seed(c.seed, "em");
  const EMResult result = run_em(logs, data.splits.train, data.positions, em, warm);

  save_params(result.params, params_path.string());
  result.models.g.save((out_dir(c) / "g.model").string());
  result.models.h.save((out_dir(c) / "h.model").string());
  {
    std::ostringstream trace;
    write_trace_csv(result.trace, trace);
    write_text_file(out_dir(c) / "trace.csv", trace.str());
  }
  EstimateSummary summary;
  summary.epochs_run = result.epochs_run;
  summary.converged = result.converged;
  summary.loglik = result.trace.empty() ? 0.0 : result.trace.back().loglik;
  for (int i = 1; i <= data.positions; ++i) {
    summary.theta_abs_error.push_back(
        std::abs(result.params.theta[i - 1] - examination_prob(i, c.sim.sim)));
  }
  json est = {{"estimate_hash", c.estimate_hash()},
              {"data_hash", c.data_hash()},
              {"epochs_run", summary.epochs_run},
              {"converged", summary.converged},
              {"warm_start", warm.has_value()},
              {"loglik", summary.loglik},
              {"theta_abs_error", summary.theta_abs_error}};
  write_json_file(out_dir(c) / "estimate.json", est);
  return summary;
}

EvalReport cmd_train_eval(const ExperimentConfig& c, int jobs) {
  c.validate();
  const json manifest = read_manifest(c);
  require_hash(manifest, "data_hash", c.data_hash(), (out_dir(c) / "manifest.json").string());
  const ExperimentData data = prepare_data(c);
  const auto logs = read_split_logs(c, "train");

  const bool need_params = std::any_of(c.methods.begin(), c.methods.end(), is_debiased);
  PropensityParams params;
  RelevanceModels models;
  if (need_params) {
    const fs::path est = out_dir(c) / "estimate.json";
    if (!fs::exists(est)) {
      throw Error("debiased methods need estimates in " + c.output_dir +
                  "; run estimate first");
    }
    require_hash(read_json_file(est), "estimate_hash", c.estimate_hash(), est.string());
    params = load_params((out_dir(c) / "params.json").string());
    models.g = Regressor::load((out_dir(c) / "g.model").string());
    models.h = Regressor::load((out_dir(c) / "h.model").string());
  }

  std::vector<TrainingSet> sets;
  for (LossVariant v : c.methods) {
    try {
      sets.push_back(build_training_set(logs, data.splits.train, v,
                                        need_params ? &params : nullptr,
                                        need_params ? &models : nullptr));
    } catch (const std::exception& e) {
      throw Error(std::string(variant_name(v)) + ": " + e.what());
    }
  }

  const SimConfig eval_sim = split_sim(c, "eval");
  const Dataset& valid = data.splits.valid;
  const Dataset& test = data.splits.test;
  Validator validator = [&](const RankerModel& m) {
    const auto scores = score_dataset(m, valid);
    return c.eval.validation_metric == "ndcg"
               ? mean_ndcg_at_k(valid, scores, c.eval.validation_k)
               : expected_reward_at_k(valid, scores, eval_sim, c.eval.validation_k);
  };

  // values[method][repeat] = metric values in (ndcg ks..., reward ks...) order
  const std::size_t nm = c.methods.size();
  const std::size_t nr = static_cast<std::size_t>(c.repeats);
  std::vector<std::vector<std::vector<double>>> values(
      nm, std::vector<std::vector<double>>(nr));
  run_parallel(nm * nr, jobs, [&](std::size_t job) {
    const std::size_t m = job / nr, r = job % nr;
    const LossVariant v = c.methods[m];
    try {
      TrainConfig tc = c.train_for(v);
      tc.rng_seed = derive_seed(c.seed, "train/" + std::to_string(r));
      std::vector<double> grid = c.learning_rate_grid;
      if (grid.empty()) grid.push_back(tc.learning_rate);
      TrainResult best;
      double best_score = -std::numeric_limits<double>::infinity();
      for (double lr : grid) {
        tc.learning_rate = lr;
        TrainResult res = train_ranker(sets[m], v, data.splits.train.feature_dim, tc,
                                       validator);
        const double s = res.validation.empty() ? 0.0 : res.validation[res.best_epoch - 1];
        if (s > best_score) {
          best_score = s;
          best = std::move(res);
        }
      }
      const auto scores = score_dataset(best.model, test);
      std::vector<double> out;
      for (int k : c.eval.ks) out.push_back(mean_ndcg_at_k(test, scores, k));
      for (int k : c.eval.ks) {
        if (c.eval.expected_reward) {
          out.push_back(expected_reward_at_k(test, scores, eval_sim, k));
        } else {
          Rng rng(derive_seed(c.seed, "reward/" + std::to_string(r) + "/" +
                                          std::to_string(k)));
          out.push_back(reward_at_k(test, scores, eval_sim, k, c.eval.reward_trials, rng));
        }
      }
      values[m][r] = std::move(out);
    } catch (const std::exception& e) {
      throw Error(std::string(variant_name(v)) + ": " + e.what());
    }
  });

  EvalReport report;
  std::ostringstream runs;
  runs << "method,repeat,metric,k,value\n";
  const std::size_t nk = c.eval.ks.size();
  for (std::size_t m = 0; m < nm; ++m) {
    const std::string name(variant_name(c.methods[m]));
    for (std::size_t slot = 0; slot < 2 * nk; ++slot) {
      const char* metric = slot < nk ? "ndcg" : "reward";
      const int k = c.eval.ks[slot % nk];
      std::vector<double> col;
      for (std::size_t r = 0; r < nr; ++r) {
        col.push_back(values[m][r][slot]);
        runs << name << ',' << r << ',' << metric << ',' << k << ','
             << format_double(values[m][r][slot]) << '\n';
      }
      report.rows.push_back({name, metric, k, aggregate_runs(col)});
    }
  }
  std::ostringstream csv;
  report.write_csv(csv);
  fs::create_directories(out_dir(c));
  write_text_file(out_dir(c) / "report.csv", csv.str());
  write_text_file(out_dir(c) / "runs.csv", runs.str());
  return report;
}

void cmd_report(const std::string& output_dir, std::ostream& out) {
  const fs::path path = fs::path(output_dir) / "report.csv";
  if (!fs::exists(path)) throw Error("no report.csv in '" + output_dir + "'");
  std::ifstream in(path);
  const EvalReport report = EvalReport::read_csv(in);

  std::vector<std::string> methods;
  std::vector<std::pair<std::string, int>> columns;
  for (const auto& r : report.rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
    const auto col = std::make_pair(r.metric, r.k);
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) {
      columns.push_back(col);
    }
  }
  auto cell = [](const Aggregate& a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f \xC2\xB1 %.4f", a.mean, a.std);
    return std::string(buf);
  };
  std::size_t method_width = 6;
  for (const auto& m : methods) method_width = std::max(method_width, m.size());
  const int width = 18;
  out << std::left << std::setw(int(method_width)) << "method";
  for (const auto& [metric, k] : columns) {
    out << "  " << std::setw(width) << (metric + "@" + std::to_string(k));
  }
  out << '\n';
  for (const auto& m : methods) {
    out << std::left << std::setw(int(method_width)) << m;
    for (const auto& [metric, k] : columns) {
      const ReportRow* r = report.find(m, metric, k);
      // the plus-minus sign takes two bytes but one column
      out << "  " << std::setw(width + 1) << (r ? cell(r->value) : std::string("-"));
    }
    out << '\n';
  }
  if (!report.rows.empty()) {
    out << "runs: " << report.rows.front().value.runs << '\n';
  }
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& c, int jobs) {
  c.validate();
  std::vector<SweepRow> all;
  const bool need_estimate = std::any_of(c.methods.begin(), c.methods.end(), is_debiased);
  for (const std::string parameter : {"eta", "delta"}) {
    const auto& grid = parameter == "eta" ? c.sweep.eta : c.sweep.delta;
    std::vector<SweepRow> rows;
    for (double value : grid) {
      ExperimentConfig run = c;
      if (parameter == "eta") {
        run.sim.sim.eta = value;
      } else {
        run.sim.sim.delta = value;
      }
      run.output_dir =
          (out_dir(c) / "sweep" / (parameter + "_" + format_double(value))).string();
      cmd_simulate(run);
      if (need_estimate) cmd_estimate(run);
      const EvalReport report = cmd_train_eval(run, jobs);
      for (const auto& r : report.rows) {
        const ReportRow* base = report.find(c.sweep.baseline, r.metric, r.k);
        SweepRow row;
        row.parameter = parameter;
        row.value = value;
        row.method = r.method;
        row.metric = r.metric;
        row.k = r.k;
        row.result = r.value;
        row.gain = base && base->value.mean != 0.0
                       ? r.value.mean / base->value.mean - 1.0
                       : 0.0;
        rows.push_back(row);
      }
    }
    std::ostringstream csv;
    write_sweep_csv(rows, csv);
    write_text_file(out_dir(c) / ("sweep_" + parameter + ".csv"), csv.str());
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

}  // namespace ultra
