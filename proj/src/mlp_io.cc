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

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ultra/core.h"
#include "ultra/mlp.h"

namespace ultra {
namespace {

constexpr const char* kMagic = "ultra-mlp";
constexpr int kVersion = 1;

void write_double(std::ostream& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, end - buf);
}

double read_double(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw ParseError("checkpoint truncated", 0);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("checkpoint has malformed number '" + token + "'", 0);
  }
  return v;
}

}  // namespace

void save_mlp(const Mlp<double>& model, std::ostream& out) {
  out << kMagic << ' ' << kVersion << '\n';
  out << model.layer_sizes().size();
  for (int s : model.layer_sizes()) out << ' ' << s;
  out << '\n';
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& w = model.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c) out << ' ';
        write_double(out, w(r, c));
      }
      out << '\n';
    }
    const auto& b = model.bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      if (r) out << ' ';
      write_double(out, b[r]);
    }
    out << '\n';
  }
}

Mlp<double> load_mlp(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw ParseError("not an ultra-mlp checkpoint", 1);
  }
  if (version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version),
                     1);
  }
  std::size_t n = 0;
  if (!(in >> n) || n < 2 || n > 64) throw ParseError("bad layer count", 2);
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    if (!(in >> s)) throw ParseError("bad layer size", 2);
  }
  Mlp<double> m(sizes);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    auto& w = m.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = read_double(in);
    }
    auto& b = m.bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = read_double(in);
  }
  return m;
}

void save_mlp(const Mlp<double>& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  save_mlp(model, out);
  if (!out) throw Error("write failed for " + path);
}

Mlp<double> load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return load_mlp(in);
}

}  // namespace ultra
