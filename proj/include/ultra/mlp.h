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

// Feed-forward scorer: ELU hidden layers, identity output, reverse-mode
// gradients. Activations are stored column-per-example so a whole batch
// goes through one matrix product per layer.

#ifndef ULTRA_MLP_H_
#define ULTRA_MLP_H_

#include <Eigen/Dense>

#include <cmath>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ultra {

template <typename Scalar>
class Mlp {
 public:
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVectorS = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  // Per-layer values kept by forward() for backward().
  struct Cache {
    std::vector<MatrixS> pre;  // pre-activations, one per layer
    std::vector<MatrixS> act;  // act[0] is the input, act[l+1] = f(pre[l])
  };

  Mlp() = default;

  // All-zero parameters with the given layer sizes, e.g. {d, 64, 32, 1}.
  explicit Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2 || sizes_.back() != 1) {
      throw std::invalid_argument("layer sizes must be [input, ..., 1]");
    }
    for (int s : sizes_) {
      if (s < 1) throw std::invalid_argument("layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weights_.push_back(MatrixS::Zero(sizes_[l + 1], sizes_[l]));
      biases_.push_back(VectorS::Zero(sizes_[l + 1]));
    }
  }

  // Glorot-uniform weights, zero biases.
  template <typename Urng>
  static Mlp random(std::vector<int> layer_sizes, Urng& rng) {
    Mlp m(std::move(layer_sizes));
    for (auto& w : m.weights_) {
      const double limit = std::sqrt(6.0 / double(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = Scalar(u(rng));
      }
    }
    return m;
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.empty() ? 0 : sizes_.front(); }
  std::size_t num_layers() const { return weights_.size(); }
  const MatrixS& weight(std::size_t l) const { return weights_[l]; }
  const VectorS& bias(std::size_t l) const { return biases_[l]; }
  MatrixS& weight(std::size_t l) { return weights_[l]; }
  VectorS& bias(std::size_t l) { return biases_[l]; }

  Eigen::Index num_parameters() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      n += weights_[l].size() + biases_[l].size();
    }
    return n;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    }
    return true;
  }

  // Scores for every column of `inputs` (input_dim x n).
  RowVectorS forward(const MatrixS& inputs, Cache* cache = nullptr) const {
    if (inputs.rows() != input_dim()) {
      throw std::invalid_argument("input has " + std::to_string(inputs.rows()) +
                                  " features, model expects " +
                                  std::to_string(input_dim()));
    }
    if (cache) {
      cache->pre.clear();
      cache->act.clear();
      cache->act.push_back(inputs);
    }
    MatrixS a = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      MatrixS z = weights_[l] * a;
      z.colwise() += biases_[l];
      const bool hidden = l + 1 < weights_.size();
      if (cache) cache->pre.push_back(z);
      a = hidden ? elu(z) : z;
      if (cache) cache->act.push_back(a);
    }
    return a.row(0);
  }

  Scalar score(const VectorS& x) const { return forward(MatrixS(x))(0); }

  // Accumulates d(sum_k dscore_k * score_k)/d(params) into `grad`, which must
  // have this model's shape. Returns the gradient with respect to the inputs.
  MatrixS backward(const Cache& cache, const RowVectorS& dscore,
                   Mlp& grad) const {
    MatrixS delta = dscore;  // 1 x n, gradient wrt pre-activation of output
    for (std::size_t l = weights_.size(); l-- > 0;) {
      grad.weights_[l].noalias() += delta * cache.act[l].transpose();
      grad.biases_[l].noalias() += delta.rowwise().sum();
      MatrixS upstream = weights_[l].transpose() * delta;
      if (l == 0) return upstream;
      delta = upstream.cwiseProduct(elu_derivative(cache.pre[l - 1]));
    }
    return delta;
  }

  VectorS input_gradient(const VectorS& x) const {
    Cache cache;
    forward(MatrixS(x), &cache);
    Mlp scratch = zeros_like();
    RowVectorS one = RowVectorS::Ones(1);
    return backward(cache, one, scratch).col(0);
  }

  Mlp zeros_like() const {
    Mlp m;
    m.sizes_ = sizes_;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      m.weights_.push_back(MatrixS::Zero(weights_[l].rows(), weights_[l].cols()));
      m.biases_.push_back(VectorS::Zero(biases_[l].size()));
    }
    return m;
  }

  // Flattened parameters: per layer, weights column-major then biases.
  VectorS parameters() const {
    VectorS p(num_parameters());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      p.segment(k, weights_[l].size()) =
          Eigen::Map<const VectorS>(weights_[l].data(), weights_[l].size());
      k += weights_[l].size();
      p.segment(k, biases_[l].size()) = biases_[l];
      k += biases_[l].size();
    }
    return p;
  }

  void set_parameters(const VectorS& p) {
    if (p.size() != num_parameters()) {
      throw std::invalid_argument("parameter vector has wrong length");
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::Map<VectorS>(weights_[l].data(), weights_[l].size()) =
          p.segment(k, weights_[l].size());
      k += weights_[l].size();
      biases_[l] = p.segment(k, biases_[l].size());
      k += biases_[l].size();
    }
  }

  void set_zero() {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      weights_[l].setZero();
      biases_[l].setZero();
    }
  }

  bool operator==(const Mlp& o) const {
    if (sizes_ != o.sizes_) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) {
        return false;
      }
    }
    return true;
  }

  static MatrixS elu(const MatrixS& z) {
    return z.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : std::expm1(v); });
  }
  static MatrixS elu_derivative(const MatrixS& z) {
    return z.unaryExpr(
        [](Scalar v) { return v > Scalar(0) ? Scalar(1) : std::exp(v); });
  }

 private:
  std::vector<int> sizes_;
  std::vector<MatrixS> weights_;
  std::vector<VectorS> biases_;
};

// Adagrad with per-parameter squared-gradient accumulators.
template <typename Scalar>
class Adagrad {
 public:
  Adagrad(const Mlp<Scalar>& shape, Scalar learning_rate,
          Scalar initial_accumulator = Scalar(0.1))
      : lr_(learning_rate), accum_(shape.zeros_like()) {
    if (!(learning_rate > Scalar(0))) {
      throw std::invalid_argument("learning rate must be positive");
    }
    for (std::size_t l = 0; l < accum_.num_layers(); ++l) {
      accum_.weight(l).setConstant(initial_accumulator);
      accum_.bias(l).setConstant(initial_accumulator);
    }
  }

  void step(Mlp<Scalar>& model, const Mlp<Scalar>& grad) {
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      update(model.weight(l), accum_.weight(l), grad.weight(l));
      update(model.bias(l), accum_.bias(l), grad.bias(l));
    }
  }

 private:
  template <typename P, typename A, typename G>
  void update(P& param, A& accum, const G& g) {
    accum.array() += g.array().square();
    param.array() -= lr_ * g.array() / accum.array().sqrt();
  }

  Scalar lr_;
  Mlp<Scalar> accum_;
};

// Versioned text checkpoint: layer sizes, then row-major weights and biases
// in shortest round-trip decimal form. load(save(m)) is bit-exact.
void save_mlp(const Mlp<double>& model, std::ostream& out);
Mlp<double> load_mlp(std::istream& in);
void save_mlp(const Mlp<double>& model, const std::string& path);
Mlp<double> load_mlp(const std::string& path);

}  // namespace ultra

#endif  // ULTRA_MLP_H_
