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

// Debiased pairwise ranking: pair weights, the logistic pairwise loss and the
// training loop for the feed-forward ranker.

#ifndef ULTRA_RANK_H_
#define ULTRA_RANK_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ultra/core.h"
#include "ultra/em.h"
#include "ultra/mlp.h"

namespace ultra {

using RankerModel = Mlp<double>;

enum class LossVariant {
  kIPW,
  kBayesIPW,
  kOpt,
  kNaivePairwise,
  kNaivePointwise,
  kOraclePairwise,
};

std::string_view variant_name(LossVariant v);
// Accepts the names returned by variant_name.
LossVariant parse_variant(std::string_view name);
// True for the variants that need estimated propensities.
bool is_debiased(LossVariant v);

enum class GainMode { kLinear, kExponential };

struct TrainConfig {
  double learning_rate = 0.02;
  int epochs = 10;
  int batch_size = 256;  // pairs (or points) per step
  std::vector<int> hidden{64, 32};
  GainMode gain = GainMode::kLinear;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

double score(const RankerModel& model, const Vector& features);
// Scores of every item of every request, in item order.
std::vector<Vector> score_dataset(const RankerModel& model, const Dataset& data);

struct PairLoss {
  double loss = 0.0;
  double grad_i = 0.0;
  double grad_j = 0.0;
};

// log(1 + exp(-(s_i - s_j))) and its gradient with respect to (s_i, s_j).
PairLoss pairwise_base_loss(double score_i, double score_j);

// eps+ gamma / (eps+ gamma + eps- (1 - gamma)).
double compute_m_ij(double eps_pos, double eps_neg, double gamma);

// Posterior that the zero-label item j was examined jointly with i.
double compute_h_ij(double theta_i, double theta_neg_j, double eps_pos,
                    double eps_neg, double gamma, double beta_i);

// |gain(c_i) - gain(c_j)| * |1/log2(1 + rank_i) - 1/log2(1 + rank_j)|.
double delta_z(double c_i, double c_j, int rank_i, int rank_j, GainMode mode);

// Everything a pair weight depends on, already looked up for the pair.
struct PairWeightInputs {
  double theta_i = 1.0;
  double theta_j = 1.0;
  double theta_neg_j = 1.0;
  double eps_pos = 1.0;
  double eps_neg = 0.0;
  double gamma = 0.5;
  double beta_i = 0.5;
  bool c_j_zero = false;
  double delta_z = 1.0;  // used by kOpt only
};

double pair_weight(LossVariant variant, const PairWeightInputs& in);

// Inputs for the ordered position pair (pos_i, pos_j), probabilities clamped.
PairWeightInputs weight_inputs(const PropensityParams& params, int pos_i, int pos_j,
                               double gamma, double beta_i, bool c_j_zero);

// Mean of weight * pairwise_base_loss over the columns of x_i / x_j. When
// `grad` is given the parameter gradient is accumulated into it.
double pairwise_objective(const RankerModel& model, const Matrix& x_i,
                          const Matrix& x_j, const Vector& weights,
                          RankerModel* grad = nullptr);

// Mean squared error of the scores against `targets`.
double pointwise_objective(const RankerModel& model, const Matrix& x,
                           const Vector& targets, RankerModel* grad = nullptr);

// Training examples derived from logs for one variant. Pairs reference slots
// of the sessions; |Delta Z| is applied at training time from current ranks.
struct TrainingSet {
  struct Session {
    std::vector<const Vector*> x;
    std::vector<double> c;
  };
  struct Pair {
    int session = 0;
    int slot_i = 0;
    int slot_j = 0;
    double weight = 1.0;  // excluding |Delta Z|
  };
  std::vector<Session> sessions;
  std::vector<Pair> pairs;
  bool pointwise = false;
};

// Pairs c_i > c_j of every impression (true grades y_i > y_j over every
// request for kOraclePairwise; displayed items for kNaivePointwise).
// Debiased variants need `params` and `models`.
TrainingSet build_training_set(const std::vector<ImpressionLog>& logs,
                               const Dataset& data, LossVariant variant,
                               const PropensityParams* params,
                               const RelevanceModels* models);

// Validation score of a candidate model; higher is better.
using Validator = std::function<double(const RankerModel&)>;

struct TrainResult {
  RankerModel model;
  int best_epoch = 0;
  std::vector<double> validation;  // per epoch
  std::vector<double> train_loss;  // per epoch
};

// Adagrad on the variant's objective. Keeps the epoch with the best
// validation score when `validate` is set, the last epoch otherwise.
TrainResult train_ranker(const TrainingSet& set, LossVariant variant, int input_dim,
                         const TrainConfig& config, const Validator& validate = {});

}  // namespace ultra

#endif  // ULTRA_RANK_H_
