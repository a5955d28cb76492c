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

#include "ultra/core.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ultra {

std::size_t Dataset::num_items() const {
  std::size_t n = 0;
  for (const auto& r : requests) n += r.items.size();
  return n;
}

void Dataset::validate() const {
  for (const auto& r : requests) {
    if (r.items.empty()) {
      throw std::invalid_argument("request " + r.request_id + " has no items");
    }
    for (const auto& item : r.items) {
      if (item.features.size() != feature_dim) {
        throw std::invalid_argument("item " + item.item_id +
                                    " has wrong feature dimensionality");
      }
      if (!item.features.allFinite()) {
        throw std::invalid_argument("item " + item.item_id +
                                    " has non-finite features");
      }
      if (item.true_relevance &&
          (*item.true_relevance < 0 || *item.true_relevance > kMaxGrade)) {
        throw std::invalid_argument("item " + item.item_id +
                                    " has grade outside [0,4]");
      }
    }
  }
}

void ImpressionLog::validate() const {
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.position != static_cast<int>(k) + 1) {
      throw std::invalid_argument("log for " + request_id +
                                  ": positions must be 1..n in order");
    }
    if (e.click != 0 && e.click != 1) {
      throw std::invalid_argument("log for " + request_id + ": click not 0/1");
    }
    if (!(e.dwell_time >= 0.0) || !(e.label_c >= 0.0)) {
      throw std::invalid_argument("log for " + request_id +
                                  ": negative dwell time or label");
    }
    if (e.dwell_time > 0.0 && e.click == 0) {
      throw std::invalid_argument("log for " + request_id +
                                  ": dwell time without click");
    }
  }
}

PropensityParams PropensityParams::initial(int positions, double beta) {
  if (positions < 1) throw std::invalid_argument("positions must be >= 1");
  beta = clamp_prob(beta);
  PropensityParams p;
  p.theta.resize(positions);
  p.theta_neg.resize(positions);
  for (int i = 0; i < positions; ++i) {
    const double t = clamp_prob(1.0 / (i + 1));
    p.theta[i] = t;
    p.theta_neg[i] = clamp_prob(t * (1.0 - beta) / (1.0 - t * beta));
  }
  p.eps_pos = Matrix::Constant(positions, positions, 0.9);
  p.eps_neg = Matrix::Constant(positions, positions, 0.1);
  return p;
}

void PropensityParams::validate() const {
  const auto n = theta.size();
  if (n == 0 || theta_neg.size() != n || eps_pos.rows() != n ||
      eps_pos.cols() != n || eps_neg.rows() != n || eps_neg.cols() != n) {
    throw std::invalid_argument("propensity parameter shapes disagree");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(theta[i] > 0.0 && theta[i] <= 1.0)) {
      throw std::invalid_argument("theta outside (0,1] at position " +
                                  std::to_string(i + 1));
    }
    if (!(theta_neg[i] > 0.0 && theta_neg[i] <= 1.0)) {
      throw std::invalid_argument("theta_neg outside (0,1] at position " +
                                  std::to_string(i + 1));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const double lo = eps_neg(i, j);
      const double hi = eps_pos(i, j);
      if (!(0.0 < lo && lo < hi && hi < 1.0)) {
        throw std::invalid_argument(
            "eps violates 0 < eps- < eps+ < 1 at (" + std::to_string(i + 1) +
            "," + std::to_string(j + 1) + ")");
      }
    }
  }
}

std::vector<std::size_t> ranked_order(std::span<const double> scores,
                                      std::span<const std::string> item_ids) {
  if (scores.size() != item_ids.size()) {
    throw std::invalid_argument("scores and item ids differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return item_ids[a] < item_ids[b];
  });
  return order;
}

std::vector<Placement> rank_by_scores(std::span<const double> scores,
                                      std::span<const std::string> item_ids) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("non-finite score");
  }
  const auto order = ranked_order(scores, item_ids);
  std::vector<Placement> out(scores.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    out[order[rank]] = {item_ids[order[rank]], static_cast<int>(rank) + 1};
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return mix64(seed ^ mix64(fnv1a64(label)));
}

}  // namespace ultra
