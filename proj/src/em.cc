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

#include "ultra/em.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace ultra {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double floor_den(double d) { return std::max(d, kDenominatorFloor); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void check_position(int pos, const PropensityParams& params) {
  if (pos < 1 || pos > params.positions()) {
    throw std::out_of_range("position " + std::to_string(pos) + " outside 1.." +
                            std::to_string(params.positions()));
  }
}

struct PairTerms {
  double a;  // theta_i theta_j eps+ gamma
  double b;  // theta_i theta_j eps- (1 - gamma)
  double c;  // theta_i (1 - theta_j) beta_i
  double pe;
  double ep;
  double en;
  double gamma;
};

PairTerms pair_terms(int pos_i, int pos_j, const PropensityParams& params,
                     double gamma, double beta_i) {
  check_position(pos_i, params);
  check_position(pos_j, params);
  if (pos_i == pos_j) throw std::invalid_argument("pair positions must differ");
  const double ti = clamp_prob(params.theta[pos_i - 1]);
  const double tj = clamp_prob(params.theta[pos_j - 1]);
  PairTerms t;
  t.ep = clamp_prob(params.eps_pos(pos_i - 1, pos_j - 1));
  t.en = clamp_prob(params.eps_neg(pos_i - 1, pos_j - 1));
  t.gamma = clamp_prob(gamma);
  const double beta = clamp_prob(beta_i);
  t.pe = ti * tj;
  t.a = t.pe * t.ep * t.gamma;
  t.b = t.pe * t.en * (1.0 - t.gamma);
  t.c = ti * (1.0 - tj) * beta;
  const double d = t.a + t.b + t.c;
  if (!(d > 0.0 && d < 1.0)) {
    throw NumericDomainError("pair label probability outside (0,1)");
  }
  return t;
}

struct Session {
  std::string request_id;
  std::vector<const Vector*> x;
  std::vector<double> c;
  std::vector<std::pair<int, int>> pairs;  // 0-based slots; empty = all
};

std::vector<std::pair<int, int>> all_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  out.reserve(std::size_t(n) * std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) out.emplace_back(i, j);
    }
  }
  return out;
}

std::vector<Session> build_sessions(const std::vector<ImpressionLog>& logs,
                                    const FeatureIndex& features, int positions,
                                    int max_pairs, std::uint64_t seed) {
  std::vector<Session> sessions;
  sessions.reserve(logs.size());
  for (std::size_t s = 0; s < logs.size(); ++s) {
    const auto& log = logs[s];
    Session out;
    out.request_id = log.request_id;
    for (const auto& e : log.entries) {
      if (e.position > positions) {
        throw std::invalid_argument("log position " + std::to_string(e.position) +
                                    " exceeds " + std::to_string(positions) +
                                    " positions");
      }
      auto it = features.find(e.item_id);
      if (it == features.end()) {
        throw std::invalid_argument("log references unknown item '" + e.item_id +
                                    "'");
      }
      out.x.push_back(it->second);
      out.c.push_back(e.label_c);
    }
    const int n = static_cast<int>(out.x.size());
    if (max_pairs > 0 && n * (n - 1) > max_pairs) {
      out.pairs = all_pairs(n);
      Rng rng(derive_seed(seed, "pairs/" + std::to_string(s)));
      std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
      out.pairs.resize(max_pairs);
      std::sort(out.pairs.begin(), out.pairs.end());
    }
    sessions.push_back(std::move(out));
  }
  return sessions;
}

// Relevance predictions for one session: beta per slot, gamma per pair.
struct SessionPredictions {
  Vector beta;
  Vector gamma;
  const std::vector<std::pair<int, int>>* pairs = nullptr;
  Matrix pair_inputs;
};

void predict_session(const Session& s, const RelevanceModels& models,
                     const std::vector<std::pair<int, int>>& full_pairs,
                     SessionPredictions& out) {
  const int n = static_cast<int>(s.x.size());
  const int d = static_cast<int>(s.x.front()->size());
  Matrix x(d, n);
  for (int k = 0; k < n; ++k) x.col(k) = *s.x[k];
  out.beta = models.h.predict_batch(x);
  out.pairs = s.pairs.empty() ? &full_pairs : &s.pairs;
  const auto& pairs = *out.pairs;
  out.pair_inputs.resize(3 * d, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    auto col = out.pair_inputs.col(static_cast<Eigen::Index>(p));
    col.segment(0, d) = x.col(i);
    col.segment(d, d) = x.col(j);
    col.segment(2 * d, d) = x.col(i) - x.col(j);
  }
  out.gamma = models.g.predict_batch(out.pair_inputs);
}

double max_abs_delta(const PropensityParams& a, const PropensityParams& b) {
  double m = (a.theta - b.theta).cwiseAbs().maxCoeff();
  m = std::max(m, (a.theta_neg - b.theta_neg).cwiseAbs().maxCoeff());
  m = std::max(m, (a.eps_pos - b.eps_pos).cwiseAbs().maxCoeff());
  m = std::max(m, (a.eps_neg - b.eps_neg).cwiseAbs().maxCoeff());
  return m;
}

double session_loglik(const Session& s, const SessionPredictions& pred,
                      const PropensityParams& params) {
  double ll = 0.0;
  const auto& pairs = *pred.pairs;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const double d = pair_label_probability(i + 1, j + 1, params,
                                            pred.gamma[Eigen::Index(p)], pred.beta[i]);
    ll += s.c[i] > s.c[j] ? std::log(d) : std::log1p(-d);
  }
  for (std::size_t k = 0; k < s.x.size(); ++k) {
    const double q = clamp_prob(params.theta[Eigen::Index(k)]) *
                     clamp_prob(pred.beta[Eigen::Index(k)]);
    ll += s.c[k] > 0 ? std::log(q) : std::log1p(-q);
  }
  return ll;
}

void write_number(std::ostream& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, end - buf);
}

}  // namespace

double pair_label_probability(int pos_i, int pos_j, const PropensityParams& params,
                              double gamma, double beta_i) {
  const PairTerms t = pair_terms(pos_i, pos_j, params, gamma, beta_i);
  return t.a + t.b + t.c;
}

PairPosterior estep_pair_posteriors(int pos_i, int pos_j,
                                    const PropensityParams& params, double gamma,
                                    double beta_i) {
  const PairTerms t = pair_terms(pos_i, pos_j, params, gamma, beta_i);
  const double d = t.a + t.b + t.c;
  const double gt = floor_den(d);
  const double le = floor_den(1.0 - d);
  PairPosterior p;
  p.ee_rgt = t.a / gt;
  p.ee_rle = t.b / gt;
  p.e_note = t.c / gt;
  p.le_ee_rgt = t.pe * (1.0 - t.ep) * t.gamma / le;
  p.le_ee_rle = t.pe * (1.0 - t.en) * (1.0 - t.gamma) / le;
  p.le_rest = std::max(0.0, 1.0 - p.le_ee_rgt - p.le_ee_rle);
  return p;
}

PointPosterior estep_point_posteriors(int pos, const PropensityParams& params,
                                      double beta) {
  check_position(pos, params);
  const double t = clamp_prob(params.theta[pos - 1]);
  const double b = clamp_prob(beta);
  if (!(t * b < 1.0)) throw NumericDomainError("theta * beta must be below 1");
  const double den = floor_den(1.0 - t * b);
  PointPosterior p;
  p.note_rpos = (1.0 - t) * b / den;
  p.e_rneg = t * (1.0 - b) / den;
  p.note_rneg = (1.0 - t) * (1.0 - b) / den;
  return p;
}

BatchStatistics::BatchStatistics(int positions)
    : impressions(Vector::Zero(positions)),
      positives(Vector::Zero(positions)),
      zeros(Vector::Zero(positions)),
      examined_zero(Vector::Zero(positions)),
      gt_rgt(Matrix::Zero(positions, positions)),
      le_rgt(Matrix::Zero(positions, positions)),
      gt_rle(Matrix::Zero(positions, positions)),
      le_rle(Matrix::Zero(positions, positions)),
      pairs(Matrix::Zero(positions, positions)) {}

void BatchStatistics::add_point(int pos, double label, const PointPosterior& post) {
  const int k = pos - 1;
  impressions[k] += 1.0;
  if (label > 0) {
    positives[k] += 1.0;
  } else {
    zeros[k] += 1.0;
    examined_zero[k] += post.e_rneg;
  }
}

void BatchStatistics::add_pair(int pos_i, int pos_j, bool label_greater,
                               const PairPosterior& post) {
  const int i = pos_i - 1;
  const int j = pos_j - 1;
  pairs(i, j) += 1.0;
  if (label_greater) {
    gt_rgt(i, j) += post.ee_rgt;
    gt_rle(i, j) += post.ee_rle;
  } else {
    le_rgt(i, j) += post.le_ee_rgt;
    le_rle(i, j) += post.le_ee_rle;
  }
}

RawEstimates mstep_batch_estimates(const BatchStatistics& stats) {
  const Eigen::Index n = stats.impressions.size();
  RawEstimates raw;
  raw.theta = Vector::Constant(n, kNaN);
  raw.theta_neg = Vector::Constant(n, kNaN);
  raw.eps_pos = Matrix::Constant(n, n, kNaN);
  raw.eps_neg = Matrix::Constant(n, n, kNaN);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (stats.impressions[i] > 0) {
      raw.theta[i] = (stats.positives[i] + stats.examined_zero[i]) / stats.impressions[i];
    }
    if (stats.zeros[i] > 0) raw.theta_neg[i] = stats.examined_zero[i] / stats.zeros[i];
    for (Eigen::Index j = 0; j < n; ++j) {
      if (stats.pairs(i, j) <= 0) continue;
      raw.eps_pos(i, j) =
          stats.gt_rgt(i, j) / floor_den(stats.gt_rgt(i, j) + stats.le_rgt(i, j));
      raw.eps_neg(i, j) =
          stats.gt_rle(i, j) / floor_den(stats.gt_rle(i, j) + stats.le_rle(i, j));
    }
  }
  return raw;
}

PropensityParams blend(const PropensityParams& params, const RawEstimates& raw,
                       double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must be in (0, 1]");
  }
  auto mix = [alpha](double old, double est) {
    return std::isnan(est) ? old : old * (1.0 - alpha) + est * alpha;
  };
  PropensityParams out = params;
  const Eigen::Index n = params.theta.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    out.theta[i] = clamp_prob(mix(params.theta[i], raw.theta[i]));
    out.theta_neg[i] = clamp_prob(mix(params.theta_neg[i], raw.theta_neg[i]));
    for (Eigen::Index j = 0; j < n; ++j) {
      double ep = clamp_prob(mix(params.eps_pos(i, j), raw.eps_pos(i, j)));
      double en = clamp_prob(mix(params.eps_neg(i, j), raw.eps_neg(i, j)));
      if (en >= ep) {
        const double mid = std::clamp(0.5 * (ep + en), 2.0 * kProbFloor,
                                      1.0 - 2.0 * kProbFloor);
        ep = mid + kProbFloor;
        en = mid - kProbFloor;
      }
      out.eps_pos(i, j) = ep;
      out.eps_neg(i, j) = en;
    }
  }
  return out;
}

Regressor::Regressor(std::vector<int> hidden, int input_dim, double constant)
    : hidden_(std::move(hidden)), input_dim_(input_dim),
      constant_(clamp_prob(constant)) {
  if (input_dim < 1) throw std::invalid_argument("regressor input_dim must be >= 1");
  for (int h : hidden_) {
    if (h < 1) throw std::invalid_argument("hidden sizes must be positive");
  }
}

double Regressor::predict(const Vector& x) const {
  if (x.size() != input_dim_) {
    throw std::invalid_argument("regressor expects " + std::to_string(input_dim_) +
                                " features, got " + std::to_string(x.size()));
  }
  if (!fitted_) return constant_;
  return clamp_prob(sigmoid(net_.score(x)));
}

Vector Regressor::predict_batch(const Matrix& columns) const {
  if (columns.rows() != input_dim_) {
    throw std::invalid_argument("regressor expects " + std::to_string(input_dim_) +
                                " features, got " + std::to_string(columns.rows()));
  }
  if (!fitted_) return Vector::Constant(columns.cols(), constant_);
  const Eigen::RowVectorXd z = net_.forward(columns);
  Vector out(z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) out[k] = clamp_prob(sigmoid(z[k]));
  return out;
}

double Regressor::fit(const Matrix& inputs, const Vector& targets, int epochs,
                      int batch_size, double learning_rate, Rng& rng) {
  if (inputs.cols() == 0) throw std::invalid_argument("empty regression set");
  if (inputs.cols() != targets.size()) {
    throw std::invalid_argument("inputs and targets differ in length");
  }
  if (inputs.rows() != input_dim_) {
    throw std::invalid_argument("regression inputs have wrong dimension");
  }
  if (epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("epochs and batch_size must be >= 1");
  }
  if (!fitted_) {
    std::vector<int> sizes{input_dim_};
    sizes.insert(sizes.end(), hidden_.begin(), hidden_.end());
    sizes.push_back(1);
    net_ = Mlp<double>::random(sizes, rng);
    net_.bias(net_.num_layers() - 1)[0] = std::log(constant_ / (1.0 - constant_));
    fitted_ = true;
  }
  Adagrad<double> opt(net_, learning_rate);
  Mlp<double> grad = net_.zeros_like();
  Mlp<double>::Cache cache;
  const Eigen::Index n = inputs.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double last = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const Matrix xb = inputs(Eigen::all, idx);
      const Eigen::RowVectorXd z = net_.forward(xb, &cache);
      Eigen::RowVectorXd dz(len);
      for (Eigen::Index k = 0; k < len; ++k) {
        const double y = targets[idx[std::size_t(k)]];
        total += softplus(z[k]) - y * z[k];
        dz[k] = (sigmoid(z[k]) - y) / double(len);
      }
      grad.set_zero();
      net_.backward(cache, dz, grad);
      opt.step(net_, grad);
    }
    last = total / double(n);
    if (!std::isfinite(last) || !net_.all_finite()) {
      throw TrainingError("regressor loss diverged at epoch " + std::to_string(epoch));
    }
  }
  return last;
}

void Regressor::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "ultra-regressor 1\n" << input_dim_ << ' ';
  write_number(out, constant_);
  out << ' ' << (fitted_ ? 1 : 0) << '\n' << hidden_.size();
  for (int h : hidden_) out << ' ' << h;
  out << '\n';
  if (fitted_) save_mlp(net_, out);
  if (!out) throw Error("failed writing " + path);
}

Regressor Regressor::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "ultra-regressor" || version != 1) {
    throw ParseError(path + ": not an ultra-regressor file", 1);
  }
  int dim = 0, fitted = 0;
  std::string constant_token;
  std::size_t layers = 0;
  if (!(in >> dim >> constant_token >> fitted >> layers)) {
    throw ParseError(path + ": truncated header", 2);
  }
  double constant = 0.0;
  auto [ptr, ec] = std::from_chars(constant_token.data(),
                                   constant_token.data() + constant_token.size(),
                                   constant);
  if (ec != std::errc()) throw ParseError(path + ": malformed constant", 2);
  std::vector<int> hidden(layers);
  for (auto& h : hidden) {
    if (!(in >> h)) throw ParseError(path + ": truncated hidden sizes", 3);
  }
  Regressor r(hidden, dim, constant);
  if (fitted) {
    r.net_ = load_mlp(in);
    r.fitted_ = true;
    if (r.net_.input_dim() != dim) throw ParseError(path + ": dimension mismatch", 4);
  }
  return r;
}

Vector pair_features(const Vector& x_i, const Vector& x_j) {
  if (x_i.size() != x_j.size()) {
    throw std::invalid_argument("pair feature vectors differ in length");
  }
  const Eigen::Index d = x_i.size();
  Vector out(3 * d);
  out << x_i, x_j, x_i - x_j;
  return out;
}

void EMConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("em.alpha must be in (0, 1]");
  if (batch_size < 0) throw std::invalid_argument("em.batch_size must be >= 0");
  if (max_epochs < 1) throw std::invalid_argument("em.max_epochs must be >= 1");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("em.tolerance must be >= 0");
  if (max_pairs_per_request < 0 || max_regression_pairs < 0) {
    throw std::invalid_argument("em pair caps must be >= 0");
  }
  if (regressor.epochs < 1 || regressor.batch_size < 1) {
    throw std::invalid_argument("em.regressor epochs and batch_size must be >= 1");
  }
  if (!(regressor.learning_rate > 0.0)) {
    throw std::invalid_argument("em.regressor.learning_rate must be positive");
  }
  for (int h : regressor.hidden) {
    if (h < 1) throw std::invalid_argument("em.regressor.hidden sizes must be positive");
  }
}

double pair_relevance_target(const PairTargetInput& in, const PropensityParams& params,
                             GammaTarget mode) {
  const double gamma = clamp_prob(in.gamma);
  if (mode == GammaTarget::kMarginal) {
    return in.label_greater ? in.posterior.ee_rgt + in.posterior.e_note * gamma
                            : in.posterior.le_ee_rgt + in.posterior.le_rest * gamma;
  }
  const double ep = clamp_prob(params.eps_pos(in.pos_i - 1, in.pos_j - 1));
  const double en = clamp_prob(params.eps_neg(in.pos_i - 1, in.pos_j - 1));
  if (in.label_greater) {
    return ep * gamma / floor_den(ep * gamma + en * (1.0 - gamma));
  }
  return (1.0 - ep) * gamma /
         floor_den((1.0 - ep) * gamma + (1.0 - en) * (1.0 - gamma));
}

double point_relevance_target(double label, const PointPosterior& post) {
  return label > 0 ? 1.0 : post.note_rpos;
}

double sample_target(double probability, bool bernoulli, Rng& rng) {
  const double p = std::clamp(probability, 0.0, 1.0);
  if (!bernoulli) return p;
  return std::bernoulli_distribution(p)(rng) ? 1.0 : 0.0;
}

void fit_regressors(const RegressionSet& pairs, const RegressionSet& points,
                    const RegressorConfig& config, RelevanceModels& models,
                    Rng& rng) {
  models.g.fit(pairs.inputs, pairs.targets, config.epochs, config.batch_size,
               config.learning_rate, rng);
  models.h.fit(points.inputs, points.targets, config.epochs, config.batch_size,
               config.learning_rate, rng);
}

FeatureIndex index_features(const Dataset& data) {
  FeatureIndex index;
  index.reserve(data.num_items());
  for (const auto& r : data.requests) {
    for (const auto& item : r.items) index[item.item_id] = &item.features;
  }
  return index;
}

double log_likelihood(const std::vector<ImpressionLog>& logs,
                      const FeatureIndex& features, const PropensityParams& params,
                      const RelevanceModels& models, int max_pairs_per_request) {
  const auto sessions =
      build_sessions(logs, features, params.positions(), max_pairs_per_request, 0);
  std::vector<std::vector<std::pair<int, int>>> full(params.positions() + 1);
  SessionPredictions pred;
  double ll = 0.0;
  for (const auto& s : sessions) {
    if (s.x.empty()) continue;
    auto& fp = full[s.x.size()];
    if (fp.empty()) fp = all_pairs(static_cast<int>(s.x.size()));
    predict_session(s, models, fp, pred);
    ll += session_loglik(s, pred, params);
  }
  return ll;
}

EMResult run_em(const std::vector<ImpressionLog>& logs, const Dataset& data,
                int positions, const EMConfig& config,
                const std::optional<EMWarmStart>& warm) {
  config.validate();
  if (logs.empty()) throw EmptyInputError("no impression logs to estimate from");
  if (positions < 2) throw std::invalid_argument("need at least 2 positions");
  const FeatureIndex features = index_features(data);
  const auto sessions = build_sessions(logs, features, positions,
                                       config.max_pairs_per_request, 0);
  const int d = data.feature_dim;

  double positives = 0.0, total = 0.0;
  for (const auto& s : sessions) {
    for (double c : s.c) positives += c > 0 ? 1.0 : 0.0;
    total += double(s.c.size());
  }
  if (total == 0) throw EmptyInputError("impression logs have no entries");
  const double positive_rate = clamp_prob(positives / total);

  EMResult result;
  if (warm) {
    if (warm->params.positions() != positions) {
      throw std::invalid_argument("warm-start params have wrong position count");
    }
    result.params = warm->params;
    result.models = warm->models;
  } else {
    result.params = PropensityParams::initial(positions, positive_rate);
    result.models.g = Regressor(config.regressor.hidden, 3 * d, 0.5);
    result.models.h = Regressor(config.regressor.hidden, d, positive_rate);
  }

  std::vector<std::vector<std::pair<int, int>>> full(positions + 1);
  for (int n = 2; n <= positions; ++n) full[n] = all_pairs(n);

  Rng rng(derive_seed(config.rng_seed, "em"));
  std::vector<std::size_t> order(sessions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = config.batch_size > 0
                                ? std::min<std::size_t>(config.batch_size, sessions.size())
                                : sessions.size();

  double best_ll = -std::numeric_limits<double>::infinity();
  PropensityParams best_params = result.params;
  RelevanceModels best_models = result.models;
  SessionPredictions pred;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const PropensityParams epoch_start = result.params;
    if (batch < sessions.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < sessions.size(); begin += batch) {
      const std::size_t end = std::min(sessions.size(), begin + batch);
      std::size_t batch_pairs = 0, batch_points = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& s = sessions[order[k]];
        batch_points += s.x.size();
        batch_pairs += s.pairs.empty() ? full[s.x.size()].size() : s.pairs.size();
      }
      const double keep =
          config.max_regression_pairs > 0 && batch_pairs > 0
              ? std::min(1.0, double(config.max_regression_pairs) / double(batch_pairs))
              : 1.0;
      std::bernoulli_distribution keep_pair(keep);

      BatchStatistics stats(positions);
      RegressionSet pair_set, point_set;
      pair_set.inputs.resize(3 * d, static_cast<Eigen::Index>(
                                        std::ceil(keep * double(batch_pairs) * 1.1) + 16));
      pair_set.targets.resize(pair_set.inputs.cols());
      point_set.inputs.resize(d, static_cast<Eigen::Index>(batch_points));
      point_set.targets.resize(static_cast<Eigen::Index>(batch_points));
      Eigen::Index np = 0, nq = 0;

      for (std::size_t k = begin; k < end; ++k) {
        const auto& s = sessions[order[k]];
        if (s.x.empty()) continue;
        if (s.x.size() >= 2) {
          predict_session(s, result.models, full[s.x.size()], pred);
        } else {
          pred.beta = result.models.h.predict_batch(Matrix(*s.x[0]));
          pred.pairs = &full[0];
        }
        const auto& pairs = *pred.pairs;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          const auto [i, j] = pairs[p];
          const double gamma = pred.gamma[Eigen::Index(p)];
          PairTargetInput in;
          in.pos_i = i + 1;
          in.pos_j = j + 1;
          in.label_greater = s.c[i] > s.c[j];
          in.gamma = gamma;
          in.posterior = estep_pair_posteriors(i + 1, j + 1, result.params, gamma,
                                               pred.beta[i]);
          stats.add_pair(i + 1, j + 1, in.label_greater, in.posterior);
          if (keep < 1.0 && !keep_pair(rng)) continue;
          if (np == pair_set.inputs.cols()) {
            pair_set.inputs.conservativeResize(Eigen::NoChange, np * 2);
            pair_set.targets.conservativeResize(np * 2);
          }
          pair_set.inputs.col(np) = pred.pair_inputs.col(Eigen::Index(p));
          pair_set.targets[np] = sample_target(
              pair_relevance_target(in, result.params, config.gamma_target),
              config.bernoulli_sampling, rng);
          ++np;
        }
        for (std::size_t q = 0; q < s.x.size(); ++q) {
          const int pos = static_cast<int>(q) + 1;
          const PointPosterior post =
              estep_point_posteriors(pos, result.params, pred.beta[Eigen::Index(q)]);
          stats.add_point(pos, s.c[q], post);
          point_set.inputs.col(nq) = *s.x[q];
          point_set.targets[nq] = sample_target(point_relevance_target(s.c[q], post),
                                                config.bernoulli_sampling, rng);
          ++nq;
        }
      }
      result.params = blend(result.params, mstep_batch_estimates(stats), config.alpha);
      pair_set.inputs.conservativeResize(Eigen::NoChange, np);
      pair_set.targets.conservativeResize(np);
      point_set.inputs.conservativeResize(Eigen::NoChange, nq);
      point_set.targets.conservativeResize(nq);
      if (np > 0) {
        result.models.g.fit(pair_set.inputs, pair_set.targets, config.regressor.epochs,
                            config.regressor.batch_size,
                            config.regressor.learning_rate, rng);
      }
      if (nq > 0) {
        result.models.h.fit(point_set.inputs, point_set.targets,
                            config.regressor.epochs, config.regressor.batch_size,
                            config.regressor.learning_rate, rng);
      }
    }

    TraceRow row;
    row.epoch = epoch;
    row.max_param_delta = max_abs_delta(result.params, epoch_start);
    row.loglik = log_likelihood(logs, features, result.params, result.models,
                                config.max_pairs_per_request);
    row.theta = result.params.theta;
    result.trace.push_back(row);
    result.epochs_run = epoch;
    if (row.loglik > best_ll) {
      best_ll = row.loglik;
      best_params = result.params;
      best_models = result.models;
    }
    if (row.max_param_delta < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) {
    result.params = best_params;
    result.models = best_models;
  }
  return result;
}

void save_params(const PropensityParams& params, const std::string& path) {
  nlohmann::ordered_json j;
  const int n = params.positions();
  j["positions"] = n;
  j["theta"] = std::vector<double>(params.theta.data(), params.theta.data() + n);
  j["theta_neg"] =
      std::vector<double>(params.theta_neg.data(), params.theta_neg.data() + n);
  auto rows = [n](const Matrix& m) {
    std::vector<std::vector<double>> out(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) out[i][k] = m(i, k);
    }
    return out;
  };
  j["eps_pos"] = rows(params.eps_pos);
  j["eps_neg"] = rows(params.eps_neg);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path);
}

PropensityParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  for (const char* field : {"positions", "theta", "theta_neg", "eps_pos", "eps_neg"}) {
    if (!j.contains(field)) throw SchemaError(path + ": missing field '" + field + "'", field);
  }
  PropensityParams p;
  try {
    const int n = j.at("positions").get<int>();
    auto vec = [&](const char* field) {
      const auto v = j.at(field).get<std::vector<double>>();
      if (int(v.size()) != n) throw SchemaError(path + ": wrong length for " + field, field);
      return Vector(Eigen::Map<const Vector>(v.data(), n));
    };
    auto mat = [&](const char* field) {
      const auto rows = j.at(field).get<std::vector<std::vector<double>>>();
      if (int(rows.size()) != n) throw SchemaError(path + ": wrong shape for " + field, field);
      Matrix m(n, n);
      for (int i = 0; i < n; ++i) {
        if (int(rows[i].size()) != n) {
          throw SchemaError(path + ": wrong shape for " + field, field);
        }
        for (int k = 0; k < n; ++k) m(i, k) = rows[i][k];
      }
      return m;
    };
    p.theta = vec("theta");
    p.theta_neg = vec("theta_neg");
    p.eps_pos = mat("eps_pos");
    p.eps_neg = mat("eps_neg");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what(), "");
  }
  p.validate();
  return p;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
  out << "epoch,max_param_delta,loglik";
  const Eigen::Index n = trace.empty() ? 0 : trace.front().theta.size();
  for (Eigen::Index i = 1; i <= n; ++i) out << ",theta_" << i;
  out << '\n';
  for (const auto& row : trace) {
    out << row.epoch << ',';
    write_number(out, row.max_param_delta);
    out << ',';
    write_number(out, row.loglik);
    for (Eigen::Index i = 0; i < row.theta.size(); ++i) {
      out << ',';
      write_number(out, row.theta[i]);
    }
    out << '\n';
  }
}

}  // namespace ultra
