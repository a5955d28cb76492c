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

#include "ultra/rank.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ultra {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double gain(double c, GainMode mode) {
  return mode == GainMode::kLinear ? c : std::exp2(c) - 1.0;
}

Matrix gather(const std::vector<const Vector*>& cols, int dim) {
  Matrix m(dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) m.col(Eigen::Index(k)) = *cols[k];
  return m;
}

// 1-based rank of every slot of a session under the current model.
std::vector<int> session_ranks(const RankerModel& model,
                               const TrainingSet::Session& s, int dim) {
  const Eigen::RowVectorXd scores = model.forward(gather(s.x, dim));
  std::vector<int> order(s.x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> rank(s.x.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = int(r) + 1;
  return rank;
}

}  // namespace

std::string_view variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kIPW: return "IPW";
    case LossVariant::kBayesIPW: return "BayesIPW";
    case LossVariant::kOpt: return "Opt";
    case LossVariant::kNaivePairwise: return "NaivePairwise";
    case LossVariant::kNaivePointwise: return "NaivePointwise";
    case LossVariant::kOraclePairwise: return "OraclePairwise";
  }
  return "?";
}

LossVariant parse_variant(std::string_view name) {
  for (LossVariant v : {LossVariant::kIPW, LossVariant::kBayesIPW, LossVariant::kOpt,
                        LossVariant::kNaivePairwise, LossVariant::kNaivePointwise,
                        LossVariant::kOraclePairwise}) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown loss variant '" + std::string(name) + "'");
}

bool is_debiased(LossVariant v) {
  return v == LossVariant::kIPW || v == LossVariant::kBayesIPW || v == LossVariant::kOpt;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("train.hidden sizes must be positive");
  }
}

double score(const RankerModel& model, const Vector& features) {
  return model.score(features);
}

std::vector<Vector> score_dataset(const RankerModel& model, const Dataset& data) {
  std::vector<Vector> out;
  out.reserve(data.requests.size());
  for (const auto& r : data.requests) {
    Matrix x(data.feature_dim, static_cast<Eigen::Index>(r.items.size()));
    for (std::size_t k = 0; k < r.items.size(); ++k) {
      x.col(Eigen::Index(k)) = r.items[k].features;
    }
    out.push_back(model.forward(x).transpose());
  }
  return out;
}

PairLoss pairwise_base_loss(double score_i, double score_j) {
  const double d = score_i - score_j;
  PairLoss out;
  // softplus(-d), stable for large |d|
  out.loss = d > 0 ? std::log1p(std::exp(-d)) : -d + std::log1p(std::exp(d));
  const double s = sigmoid(-d);
  out.grad_i = -s;
  out.grad_j = s;
  return out;
}

double compute_m_ij(double eps_pos, double eps_neg, double gamma) {
  const double num = eps_pos * gamma;
  const double den = num + eps_neg * (1.0 - gamma);
  if (!(den >= kDenominatorFloor)) {
    throw NumericDomainError("m_ij denominator below floor");
  }
  return num / den;
}

double compute_h_ij(double theta_i, double theta_neg_j, double eps_pos,
                    double eps_neg, double gamma, double beta_i) {
  const double both = theta_i * theta_neg_j * (eps_pos * gamma + eps_neg * (1.0 - gamma));
  const double den = both + theta_i * (1.0 - theta_neg_j) * beta_i;
  if (!(den >= kDenominatorFloor)) {
    throw NumericDomainError("h_ij denominator below floor");
  }
  return both / den;
}

double delta_z(double c_i, double c_j, int rank_i, int rank_j, GainMode mode) {
  if (rank_i < 1 || rank_j < 1) throw std::invalid_argument("ranks are 1-based");
  const double dg = std::abs(gain(c_i, mode) - gain(c_j, mode));
  const double dd = std::abs(1.0 / std::log2(1.0 + rank_i) - 1.0 / std::log2(1.0 + rank_j));
  return dg * dd;
}

double pair_weight(LossVariant variant, const PairWeightInputs& in) {
  switch (variant) {
    case LossVariant::kNaivePairwise:
    case LossVariant::kOraclePairwise:
    case LossVariant::kNaivePointwise:
      return 1.0;
    default:
      break;
  }
  const double den = in.theta_i * in.theta_j;
  if (!(den >= kDenominatorFloor)) {
    throw NumericDomainError("propensity product below floor");
  }
  double w = 1.0 / den;
  if (variant != LossVariant::kIPW) w *= compute_m_ij(in.eps_pos, in.eps_neg, in.gamma);
  if (variant == LossVariant::kOpt) w *= in.delta_z;
  if (in.c_j_zero) {
    w *= compute_h_ij(in.theta_i, in.theta_neg_j, in.eps_pos, in.eps_neg, in.gamma,
                      in.beta_i);
  }
  return w;
}

PairWeightInputs weight_inputs(const PropensityParams& params, int pos_i, int pos_j,
                               double gamma, double beta_i, bool c_j_zero) {
  if (pos_i < 1 || pos_j < 1 || pos_i > params.positions() ||
      pos_j > params.positions()) {
    throw std::out_of_range("pair position outside the parameter range");
  }
  PairWeightInputs in;
  in.theta_i = clamp_prob(params.theta[pos_i - 1]);
  in.theta_j = clamp_prob(params.theta[pos_j - 1]);
  in.theta_neg_j = clamp_prob(params.theta_neg[pos_j - 1]);
  in.eps_pos = clamp_prob(params.eps_pos(pos_i - 1, pos_j - 1));
  in.eps_neg = clamp_prob(params.eps_neg(pos_i - 1, pos_j - 1));
  in.gamma = clamp_prob(gamma);
  in.beta_i = clamp_prob(beta_i);
  in.c_j_zero = c_j_zero;
  return in;
}

double pairwise_objective(const RankerModel& model, const Matrix& x_i,
                          const Matrix& x_j, const Vector& weights, RankerModel* grad) {
  const Eigen::Index n = x_i.cols();
  if (x_j.cols() != n || weights.size() != n) {
    throw std::invalid_argument("pair batch parts differ in length");
  }
  if (n == 0) return 0.0;
  Matrix stacked(x_i.rows(), 2 * n);
  stacked << x_i, x_j;
  RankerModel::Cache cache;
  const Eigen::RowVectorXd s = model.forward(stacked, grad ? &cache : nullptr);
  Eigen::RowVectorXd ds(2 * n);
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const PairLoss l = pairwise_base_loss(s[k], s[n + k]);
    total += weights[k] * l.loss;
    ds[k] = weights[k] * l.grad_i / double(n);
    ds[n + k] = weights[k] * l.grad_j / double(n);
  }
  if (grad) model.backward(cache, ds, *grad);
  return total / double(n);
}

double pointwise_objective(const RankerModel& model, const Matrix& x,
                           const Vector& targets, RankerModel* grad) {
  const Eigen::Index n = x.cols();
  if (targets.size() != n) throw std::invalid_argument("targets differ in length");
  if (n == 0) return 0.0;
  RankerModel::Cache cache;
  const Eigen::RowVectorXd s = model.forward(x, grad ? &cache : nullptr);
  const Eigen::RowVectorXd r = s - targets.transpose();
  if (grad) model.backward(cache, 2.0 * r / double(n), *grad);
  return r.squaredNorm() / double(n);
}

TrainingSet build_training_set(const std::vector<ImpressionLog>& logs,
                               const Dataset& data, LossVariant variant,
                               const PropensityParams* params,
                               const RelevanceModels* models) {
  TrainingSet set;
  set.pointwise = variant == LossVariant::kNaivePointwise;
  if (variant == LossVariant::kOraclePairwise) {
    for (const auto& r : data.requests) {
      TrainingSet::Session s;
      for (const auto& item : r.items) {
        if (!item.true_relevance) {
          throw std::invalid_argument("oracle training needs true grades");
        }
        s.x.push_back(&item.features);
        s.c.push_back(*item.true_relevance);
      }
      const int id = static_cast<int>(set.sessions.size());
      for (std::size_t i = 0; i < s.c.size(); ++i) {
        for (std::size_t j = 0; j < s.c.size(); ++j) {
          if (s.c[i] > s.c[j]) set.pairs.push_back({id, int(i), int(j), 1.0});
        }
      }
      set.sessions.push_back(std::move(s));
    }
    return set;
  }
  if (is_debiased(variant) && (!params || !models)) {
    throw std::invalid_argument(std::string(variant_name(variant)) +
                                " needs propensities and relevance models");
  }
  const FeatureIndex features = index_features(data);
  for (const auto& log : logs) {
    TrainingSet::Session s;
    for (const auto& e : log.entries) {
      auto it = features.find(e.item_id);
      if (it == features.end()) {
        throw std::invalid_argument("log references unknown item '" + e.item_id + "'");
      }
      s.x.push_back(it->second);
      s.c.push_back(e.label_c);
    }
    const int id = static_cast<int>(set.sessions.size());
    if (!set.pointwise) {
      for (std::size_t i = 0; i < s.c.size(); ++i) {
        for (std::size_t j = 0; j < s.c.size(); ++j) {
          if (!(s.c[i] > s.c[j])) continue;
          double w = 1.0;
          if (is_debiased(variant)) {
            const int pi = log.entries[i].position;
            const int pj = log.entries[j].position;
            PairWeightInputs in = weight_inputs(
                *params, pi, pj, models->gamma(*s.x[i], *s.x[j]),
                models->beta(*s.x[i]), s.c[j] == 0.0);
            in.delta_z = 1.0;
            w = pair_weight(variant, in);
          }
          set.pairs.push_back({id, int(i), int(j), w});
        }
      }
    }
    set.sessions.push_back(std::move(s));
  }
  return set;
}

TrainResult train_ranker(const TrainingSet& set, LossVariant variant, int input_dim,
                         const TrainConfig& config, const Validator& validate) {
  config.validate();
  if (set.pointwise != (variant == LossVariant::kNaivePointwise)) {
    throw std::invalid_argument("training set was built for another variant");
  }
  Rng rng(derive_seed(config.rng_seed, std::string("ranker/") +
                                           std::string(variant_name(variant))));
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  TrainResult result;
  RankerModel model = RankerModel::random(sizes, rng);
  Adagrad<double> opt(model, config.learning_rate);
  RankerModel grad = model.zeros_like();

  // Flattened points for the pointwise variant.
  std::vector<std::pair<int, int>> points;
  if (set.pointwise) {
    for (std::size_t s = 0; s < set.sessions.size(); ++s) {
      for (std::size_t k = 0; k < set.sessions[s].x.size(); ++k) {
        points.emplace_back(int(s), int(k));
      }
    }
  }
  const std::size_t n = set.pointwise ? points.size() : set.pairs.size();
  if (n == 0) throw EmptyInputError("no training examples for " +
                                    std::string(variant_name(variant)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pair_dz;
  double best = -std::numeric_limits<double>::infinity();
  result.model = model;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (variant == LossVariant::kOpt) {
      pair_dz.assign(set.pairs.size(), 0.0);
      std::vector<std::vector<int>> ranks(set.sessions.size());
      for (std::size_t s = 0; s < set.sessions.size(); ++s) {
        if (!set.sessions[s].x.empty()) {
          ranks[s] = session_ranks(model, set.sessions[s], input_dim);
        }
      }
      for (std::size_t p = 0; p < set.pairs.size(); ++p) {
        const auto& pr = set.pairs[p];
        const auto& s = set.sessions[pr.session];
        pair_dz[p] = delta_z(s.c[pr.slot_i], s.c[pr.slot_j], ranks[pr.session][pr.slot_i],
                             ranks[pr.session][pr.slot_j], config.gain);
      }
    }
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const Eigen::Index len = static_cast<Eigen::Index>(
          std::min<std::size_t>(config.batch_size, n - start));
      grad.set_zero();
      double loss = 0.0;
      if (set.pointwise) {
        Matrix x(input_dim, len);
        Vector t(len);
        for (Eigen::Index k = 0; k < len; ++k) {
          const auto [s, slot] = points[order[start + std::size_t(k)]];
          x.col(k) = *set.sessions[s].x[slot];
          t[k] = set.sessions[s].c[slot];
        }
        loss = pointwise_objective(model, x, t, &grad);
      } else {
        Matrix xi(input_dim, len), xj(input_dim, len);
        Vector w(len);
        for (Eigen::Index k = 0; k < len; ++k) {
          const std::size_t p = order[start + std::size_t(k)];
          const auto& pr = set.pairs[p];
          xi.col(k) = *set.sessions[pr.session].x[pr.slot_i];
          xj.col(k) = *set.sessions[pr.session].x[pr.slot_j];
          w[k] = pr.weight * (pair_dz.empty() ? 1.0 : pair_dz[p]);
        }
        loss = pairwise_objective(model, xi, xj, w, &grad);
      }
      if (!std::isfinite(loss)) {
        throw TrainingError(std::string(variant_name(variant)) +
                            ": non-finite loss at epoch " + std::to_string(epoch));
      }
      total += loss * double(len);
      opt.step(model, grad);
    }
    if (!model.all_finite()) {
      throw TrainingError(std::string(variant_name(variant)) +
                          ": non-finite parameters at epoch " + std::to_string(epoch));
    }
    result.train_loss.push_back(total / double(n));
    if (validate) {
      const double v = validate(model);
      result.validation.push_back(v);
      if (v > best) {
        best = v;
        result.model = model;
        result.best_epoch = epoch;
      }
    } else {
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace ultra
