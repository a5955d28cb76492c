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

// Pairwise regression-EM for examination (theta, theta-), trust bias
// (eps+, eps-) and the relevance regressors gamma = g(X_ij), beta = h(X_i).

#ifndef ULTRA_EM_H_
#define ULTRA_EM_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ultra/core.h"
#include "ultra/mlp.h"

namespace ultra {

// An ordered position pair (i, j) of one impression with c_i > c_j.
struct PairObservation {
  std::string request_id;
  int pos_i = 0;  // 1-based
  int pos_j = 0;
  const Vector* features_i = nullptr;
  const Vector* features_j = nullptr;
  double c_i = 0.0;
  double c_j = 0.0;
  bool c_j_zero = false;
};

// Joint posterior of (e_i, e_j, relevance relation) for an ordered pair,
// under both possible label relations.
struct PairPosterior {
  // Given c_i > c_j: (both examined, r_i > r_j), (both examined,
  // r_i <= r_j), (e_i = 1, e_j = 0, r_i > 0). Sums to 1.
  double ee_rgt = 0.0;
  double ee_rle = 0.0;
  double e_note = 0.0;
  // Given c_i <= c_j: (both examined, r_i > r_j), (both examined,
  // r_i <= r_j), and the remaining not-both-examined mass.
  double le_ee_rgt = 0.0;
  double le_ee_rle = 0.0;
  double le_rest = 0.0;
};

// Posterior of a zero-label point.
struct PointPosterior {
  double note_rpos = 0.0;  // e = 0, r > 0
  double e_rneg = 0.0;     // e = 1, r <= 0; equals P(e = 1 | c = 0)
  double note_rneg = 0.0;  // e = 0, r <= 0
};

// P(c_i > c_j | i, j) under the pairwise position-based model with trust
// bias. Positions are 1-based.
double pair_label_probability(int pos_i, int pos_j, const PropensityParams& params,
                              double gamma, double beta_i);

PairPosterior estep_pair_posteriors(int pos_i, int pos_j,
                                    const PropensityParams& params, double gamma,
                                    double beta_i);

PointPosterior estep_point_posteriors(int pos, const PropensityParams& params,
                                      double beta);

// Expected-count sufficient statistics of one mini-batch.
struct BatchStatistics {
  Vector impressions;     // per position
  Vector positives;       // label > 0
  Vector zeros;           // label = 0
  Vector examined_zero;   // sum over zero labels of P(e = 1 | c = 0)
  Matrix gt_rgt;          // sum over c_i > c_j of ee_rgt
  Matrix le_rgt;          // sum over c_i <= c_j of le_ee_rgt
  Matrix gt_rle;          // sum over c_i > c_j of ee_rle
  Matrix le_rle;          // sum over c_i <= c_j of le_ee_rle
  Matrix pairs;           // ordered pairs observed per cell

  explicit BatchStatistics(int positions = 0);
  void add_point(int pos, double label, const PointPosterior& post);
  void add_pair(int pos_i, int pos_j, bool label_greater, const PairPosterior& post);
};

// Raw M-step estimates; NaN marks a cell without data in the batch.
struct RawEstimates {
  Vector theta;
  Vector theta_neg;
  Matrix eps_pos;
  Matrix eps_neg;
};

RawEstimates mstep_batch_estimates(const BatchStatistics& stats);

// old * (1 - alpha) + estimate * alpha for every cell with data, then
// projection onto 0 < eps- < eps+ < 1 and theta in [1e-4, 1 - 1e-4].
PropensityParams blend(const PropensityParams& params, const RawEstimates& raw,
                       double alpha);

// Probability regressor: an Mlp whose output passes through a sigmoid and the
// probability clamp. Before the first fit it predicts a constant.
class Regressor {
 public:
  Regressor() = default;
  Regressor(std::vector<int> hidden, int input_dim, double constant);

  int input_dim() const { return input_dim_; }
  bool fitted() const { return fitted_; }
  double constant() const { return constant_; }
  const Mlp<double>& net() const { return net_; }

  double predict(const Vector& x) const;
  Vector predict_batch(const Matrix& columns) const;

  // Binary cross-entropy fit on columns of `inputs` with targets in [0,1].
  // Warm-starts from the current net once fitted. Returns the mean loss of
  // the final pass.
  double fit(const Matrix& inputs, const Vector& targets, int epochs,
             int batch_size, double learning_rate, Rng& rng);

  void save(const std::string& path) const;
  static Regressor load(const std::string& path);

 private:
  std::vector<int> hidden_;
  int input_dim_ = 0;
  double constant_ = 0.5;
  bool fitted_ = false;
  Mlp<double> net_;
};

// [x_i ; x_j ; x_i - x_j]
Vector pair_features(const Vector& x_i, const Vector& x_j);

struct RelevanceModels {
  Regressor g;  // gamma: P(r_i > r_j | x_i, x_j)
  Regressor h;  // beta: P(r_i > 0 | x_i)

  double gamma(const Vector& x_i, const Vector& x_j) const {
    return g.predict(pair_features(x_i, x_j));
  }
  double beta(const Vector& x) const { return h.predict(x); }
};

enum class GammaTarget {
  kMarginal,      // unexamined-pair mass filled with the current gamma
  kBothExamined,  // posterior of the relation given joint examination only
};

struct RegressorConfig {
  std::vector<int> hidden{16};
  int epochs = 2;
  int batch_size = 256;
  double learning_rate = 0.05;
};

struct EMConfig {
  double alpha = 1.0;
  int batch_size = 0;  // sessions per mini-batch; 0 = full batch
  int max_epochs = 30;
  double tolerance = 1e-3;
  RegressorConfig regressor;
  bool bernoulli_sampling = true;
  GammaTarget gamma_target = GammaTarget::kMarginal;
  int max_pairs_per_request = 0;   // 0 = every ordered pair
  int max_regression_pairs = 100000;  // per refresh; 0 = no cap
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct RegressionSet {
  Matrix inputs;  // one column per example
  Vector targets;
};

// Regression targets for one batch: P(r_i > r_j | observation) per pair,
// P(r_i > 0 | observation) per point, either sampled to {0,1} or soft.
struct PairTargetInput {
  int pos_i = 0;
  int pos_j = 0;
  bool label_greater = false;
  double gamma = 0.5;
  PairPosterior posterior;
};
double pair_relevance_target(const PairTargetInput& in,
                             const PropensityParams& params, GammaTarget mode);
double point_relevance_target(double label, const PointPosterior& post);
double sample_target(double probability, bool bernoulli, Rng& rng);

void fit_regressors(const RegressionSet& pairs, const RegressionSet& points,
                    const RegressorConfig& config, RelevanceModels& models,
                    Rng& rng);

struct TraceRow {
  int epoch = 0;
  double max_param_delta = 0.0;
  double loglik = 0.0;
  Vector theta;
};

struct EMResult {
  PropensityParams params;
  RelevanceModels models;
  std::vector<TraceRow> trace;
  bool converged = false;
  int epochs_run = 0;
};

struct EMWarmStart {
  PropensityParams params;
  RelevanceModels models;
};

// Item features by item id.
using FeatureIndex = std::unordered_map<std::string, const Vector*>;
FeatureIndex index_features(const Dataset& data);

// Log-likelihood of the logs under the pairwise model (all ordered pairs)
// plus the pointwise model (every displayed item).
double log_likelihood(const std::vector<ImpressionLog>& logs,
                      const FeatureIndex& features, const PropensityParams& params,
                      const RelevanceModels& models, int max_pairs_per_request = 0);

EMResult run_em(const std::vector<ImpressionLog>& logs, const Dataset& data,
                int positions, const EMConfig& config,
                const std::optional<EMWarmStart>& warm = std::nullopt);

// Parameters as JSON: positions, theta, theta_neg, eps_pos, eps_neg (rows).
void save_params(const PropensityParams& params, const std::string& path);
PropensityParams load_params(const std::string& path);

// epoch,max_param_delta,loglik,theta_1..theta_N
void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out);

}  // namespace ultra

#endif  // ULTRA_EM_H_
