// Copyright 2026 The DecRS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Shared generators and reference implementations for the test suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "decrs/backdoor.hpp"
#include "decrs/fm.hpp"

namespace decrs::testing {

inline FmParams random_params(std::mt19937_64& rng, Backbone backbone, int32_t num_features,
                              int32_t dim, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  FmParams p;
  p.dim = dim;
  p.num_features = num_features;
  p.w0 = normal(rng);
  p.w.resize(num_features);
  for (double& x : p.w) x = normal(rng);
  p.emb.resize(static_cast<size_t>(num_features) * dim);
  for (double& x : p.emb) x = normal(rng);
  if (backbone == Backbone::kNfm) {
    p.w1.resize(static_cast<size_t>(dim) * dim);
    for (double& x : p.w1) x = normal(rng);
    p.b1.resize(dim);
    for (double& x : p.b1) x = normal(rng);
    p.h.resize(dim);
    for (double& x : p.h) x = normal(rng);
  }
  return p;
}

// Distinct feature ids split between the two sides, with random values.
inline SparseInstance random_instance(std::mt19937_64& rng, int32_t num_features, int user_count,
                                      int item_count) {
  std::vector<int32_t> ids(num_features);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::uniform_real_distribution<double> value(0.2, 1.5);
  SparseInstance inst;
  for (int k = 0; k < user_count; ++k) inst.user.push_back({ids[k], value(rng)});
  for (int k = 0; k < item_count; ++k) inst.item.push_back({ids[user_count + k], value(rng)});
  return inst;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, size_t n, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// Participants of the pairwise term: (value, embedding) for every feature
// followed by the extras at value 1.
struct Participant {
  double value;
  std::vector<double> vec;
  double linear;
};

inline std::vector<Participant> participants(const FmParams& p, const SparseInstance& inst,
                                             const std::vector<std::vector<double>>& extras) {
  std::vector<Participant> out;
  for (const auto* side : {&inst.user, &inst.item}) {
    for (const Feature& f : *side) {
      auto row = p.row(f.id);
      out.push_back({f.value, {row.begin(), row.end()}, p.w[f.id]});
    }
  }
  for (const auto& m : extras) out.push_back({1.0, m, 0.0});
  return out;
}

// w0 + sum w x + sum_{a<b} x_a x_b <z_a, z_b>, by explicit double loop.
inline double brute_fm_logit(const FmParams& p, const SparseInstance& inst,
                             const std::vector<std::vector<double>>& extras = {}) {
  const auto parts = participants(p, inst, extras);
  double out = p.w0;
  for (const auto& a : parts) out += a.linear * a.value;
  for (size_t a = 0; a < parts.size(); ++a) {
    for (size_t b = a + 1; b < parts.size(); ++b) {
      double dot = 0.0;
      for (int32_t k = 0; k < p.dim; ++k) dot += parts[a].vec[k] * parts[b].vec[k];
      out += parts[a].value * parts[b].value * dot;
    }
  }
  return out;
}

inline double brute_nfm_logit(const FmParams& p, const SparseInstance& inst,
                              const std::vector<std::vector<double>>& extras = {}) {
  const auto parts = participants(p, inst, extras);
  std::vector<double> pool(p.dim, 0.0);
  for (size_t a = 0; a < parts.size(); ++a) {
    for (size_t b = a + 1; b < parts.size(); ++b) {
      for (int32_t k = 0; k < p.dim; ++k) {
        pool[k] += parts[a].value * parts[b].value * parts[a].vec[k] * parts[b].vec[k];
      }
    }
  }
  double out = p.w0;
  for (const auto& a : parts) out += a.linear * a.value;
  for (int32_t r = 0; r < p.dim; ++r) {
    double a = p.b1[r];
    for (int32_t c = 0; c < p.dim; ++c) a += p.w1[static_cast<size_t>(r) * p.dim + c] * pool[c];
    out += p.h[r] * std::max(a, 0.0);
  }
  return out;
}

// sum_a sum_b d_a x_b (v_a (.) u_b)
inline std::vector<double> brute_ep(const std::vector<double>& d, const std::vector<double>& v,
                             const std::vector<double>& x, const std::vector<double>& u,
                             int dim) {
  std::vector<double> m(dim, 0.0);
  for (size_t a = 0; a < d.size(); ++a) {
    for (size_t b = 0; b < x.size(); ++b) {
      for (int k = 0; k < dim; ++k) m[k] += d[a] * x[b] * v[a * dim + k] * u[b * dim + k];
    }
  }
  return m;
}

// sum_a sum_b w_a w_b (c_a (.) c_b) over the concatenation [v, u].
inline std::vector<double> brute_fm(const std::vector<double>& d, const std::vector<double>& v,
                             const std::vector<double>& x, const std::vector<double>& u,
                             int dim) {
  std::vector<double> w = d;
  w.insert(w.end(), x.begin(), x.end());
  std::vector<double> c = v;
  c.insert(c.end(), u.begin(), u.end());
  std::vector<double> m(dim, 0.0);
  for (size_t a = 0; a < w.size(); ++a) {
    for (size_t b = 0; b < w.size(); ++b) {
      for (int k = 0; k < dim; ++k) m[k] += w[a] * w[b] * c[a * dim + k] * c[b * dim + k];
    }
  }
  return m;
}

inline Model random_model(std::mt19937_64& rng, Backbone backbone, GroupOperator op, int nf, int dim,
                   int groups) {
  Model m;
  m.backbone = backbone;
  m.params = random_params(rng, backbone, nf, dim, 0.4);
  Backdoor b;
  b.op = op;
  std::exponential_distribution<double> e(1.0);
  double total = 0.0;
  for (int g = 0; g < groups; ++g) total += b.dbar.emplace_back(e(rng));
  for (double& p : b.dbar) p /= total;
  b.v = random_vector(rng, groups * dim, 0.4);
  m.backdoor = b;
  return m;
}

inline double brute_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// |a - b| relative to the larger magnitude, with a floor so that gradients
// near zero are compared on an absolute scale of 1e-5.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5});
}

// Central difference of f around *x.
template <typename F>
double central_difference(double* x, F&& f, double step = 1e-4) {
  const double saved = *x;
  *x = saved + step;
  const double up = f();
  *x = saved - step;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace decrs::testing
