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

#ifndef ULTRA_CORE_H_
#define ULTRA_CORE_H_

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ultra {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Errors. Everything thrown by the library derives from `Error`, except
// std::invalid_argument for plain contract violations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be parsed. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A record is missing a field or a field has the wrong type.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string field)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// A probability computation left its domain (signals invalid parameters).
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

// An input that must hold at least one record held none.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// A training sample too poor to fit (e.g. a single distinct grade).
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kMaxGrade = 4;

struct Item {
  std::string item_id;
  Vector features;
  std::optional<int> true_relevance;  // graded 0..4
};

struct Request {
  std::string request_id;
  std::vector<Item> items;
};

struct Dataset {
  std::vector<Request> requests;
  int feature_dim = 0;

  std::size_t num_items() const;
  // Throws std::invalid_argument on empty requests, mixed dimensionality,
  // non-finite features or out-of-range grades.
  void validate() const;
};

// One displayed position of one impression. Positions are 1-based.
struct LogEntry {
  std::string item_id;
  int position = 0;
  int click = 0;
  double dwell_time = 0.0;
  double label_c = 0.0;

  bool operator==(const LogEntry&) const = default;
};

// One presentation of a ranked list together with per-position feedback.
struct ImpressionLog {
  std::string request_id;
  std::vector<LogEntry> entries;

  bool operator==(const ImpressionLog&) const = default;
  // Positions 1..n without gaps, dwell > 0 only on clicks, nonnegative
  // labels. Throws std::invalid_argument.
  void validate() const;
};

// Probability clamp applied to every model parameter before it enters a
// ratio, and to regressor outputs.
inline constexpr double kProbFloor = 1e-4;
inline constexpr double kProbCeil = 1.0 - 1e-4;
inline constexpr double kDenominatorFloor = 1e-9;

inline double clamp_prob(double p) {
  return p < kProbFloor ? kProbFloor : (p > kProbCeil ? kProbCeil : p);
}

// Examination and trust-bias parameters for positions 1..N. Vectors and
// matrices are indexed 0-based by (position - 1).
struct PropensityParams {
  Vector theta;      // P(e_i = 1 | i)
  Vector theta_neg;  // P(e_i = 1 | i, c_i = 0)
  Matrix eps_pos;    // P(c_i > c_j | both examined, r_i > r_j)
  Matrix eps_neg;    // P(c_i > c_j | both examined, r_i <= r_j)

  int positions() const { return static_cast<int>(theta.size()); }

  // theta_i = 1/i, eps+ = 0.9, eps- = 0.1, and theta- consistent with a
  // constant relevance rate `beta`.
  static PropensityParams initial(int positions, double beta);

  // Throws std::invalid_argument unless 0 < theta <= 1, 0 < theta- <= 1 and
  // 0 < eps- < eps+ < 1 everywhere.
  void validate() const;
};

struct Placement {
  std::string item_id;
  int position = 0;

  bool operator==(const Placement&) const = default;
};

// Indices of `scores` in display order: descending score, ties broken by
// ascending item id.
std::vector<std::size_t> ranked_order(std::span<const double> scores,
                                      std::span<const std::string> item_ids);

// Position (1-based) of every input item, reported in input order.
std::vector<Placement> rank_by_scores(std::span<const double> scores,
                                      std::span<const std::string> item_ids);

// Stable, platform-independent hashing used for seeds, config hashes and
// splits.
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t mix64(std::uint64_t x);
// Seed for an independent RNG stream keyed by a label (e.g. a request id).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace ultra

#endif  // ULTRA_CORE_H_
