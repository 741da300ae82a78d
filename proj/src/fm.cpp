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

#include "decrs/fm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace decrs {
namespace {

void check_extras(const FmParams& params, std::span<const std::vector<double>> extras) {
  for (const auto& e : extras) {
    if (static_cast<int32_t>(e.size()) != params.dim) {
      throw std::invalid_argument(
          fmt::format("extra vector has length {}, expected {}", e.size(), params.dim));
    }
  }
}

void check_feature(const FmParams& params, const Feature& f) {
  if (f.id < 0 || f.id >= params.num_features) {
    throw std::out_of_range(fmt::format("feature id {} outside [0, {})", f.id, params.num_features));
  }
}

// Forward pass state kept for backward.
struct Forward {
  SideSums user;
  SideSums item;
  std::vector<double> pool;      // after dropout
  std::vector<double> hidden;    // NFM pre-activation
  double logit = 0.0;
};

Forward forward(Backbone backbone, const FmParams& params, const SparseInstance& instance,
                std::span<const std::vector<double>> extras, std::span<const double> mask) {
  Forward fw;
  fw.user = side_sums(params, instance.user, extras);
  fw.item = side_sums(params, instance.item);
  fw.pool = pooled(fw.user, fw.item);
  if (!mask.empty()) {
    for (int32_t k = 0; k < params.dim; ++k) fw.pool[k] *= mask[k];
  }
  double out = params.w0 + fw.user.linear + fw.item.linear;
  if (backbone == Backbone::kFm) {
    for (double p : fw.pool) out += p;
  } else {
    const int32_t dim = params.dim;
    fw.hidden.assign(dim, 0.0);
    for (int32_t r = 0; r < dim; ++r) {
      double a = params.b1[r];
      const double* wr = params.w1.data() + static_cast<size_t>(r) * dim;
      for (int32_t c = 0; c < dim; ++c) a += wr[c] * fw.pool[c];
      fw.hidden[r] = a;
      if (a > 0.0) out += params.h[r] * a;
    }
  }
  fw.logit = out;
  return fw;
}

}  // namespace

FmParams init_params(Backbone backbone, int32_t num_features, int32_t dim, uint64_t seed,
                     double init_std) {
  if (num_features <= 0 || dim <= 0) {
    throw std::invalid_argument("init_params: feature count and dim must be positive");
  }
  FmParams p;
  p.dim = dim;
  p.num_features = num_features;
  p.w.assign(num_features, 0.0);
  p.emb.resize(static_cast<size_t>(num_features) * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_std);
  for (double& e : p.emb) e = normal(rng);
  if (backbone == Backbone::kNfm) {
    std::normal_distribution<double> glorot_sq(0.0, std::sqrt(2.0 / (dim + dim)));
    p.w1.resize(static_cast<size_t>(dim) * dim);
    for (double& e : p.w1) e = glorot_sq(rng);
    p.b1.assign(dim, 0.0);
    std::normal_distribution<double> glorot_out(0.0, std::sqrt(2.0 / (dim + 1)));
    p.h.resize(dim);
    for (double& e : p.h) e = glorot_out(rng);
  }
  return p;
}

SideSums side_sums(const FmParams& params, std::span<const Feature> features,
                   std::span<const std::vector<double>> extras) {
  check_extras(params, extras);
  const int32_t dim = params.dim;
  SideSums s;
  s.sum.assign(dim, 0.0);
  std::vector<double> squares(dim, 0.0);
  for (const Feature& f : features) {
    check_feature(params, f);
    s.linear += params.w[f.id] * f.value;
    auto e = params.row(f.id);
    for (int32_t k = 0; k < dim; ++k) {
      const double z = f.value * e[k];
      s.sum[k] += z;
      squares[k] += z * z;
    }
  }
  for (const auto& m : extras) {
    for (int32_t k = 0; k < dim; ++k) {
      s.sum[k] += m[k];
      squares[k] += m[k] * m[k];
    }
  }
  s.pairs.resize(dim);
  for (int32_t k = 0; k < dim; ++k) s.pairs[k] = 0.5 * (s.sum[k] * s.sum[k] - squares[k]);
  return s;
}

std::vector<double> pooled(const SideSums& user, const SideSums& item) {
  std::vector<double> pool(user.sum.size());
  for (size_t k = 0; k < pool.size(); ++k) {
    pool[k] = user.pairs[k] + item.pairs[k] + user.sum[k] * item.sum[k];
  }
  return pool;
}

double fm_logit(const FmParams& params, const SideSums& user, const SideSums& item) {
  double out = params.w0 + user.linear + item.linear;
  for (size_t k = 0; k < user.sum.size(); ++k) {
    out += user.pairs[k] + item.pairs[k] + user.sum[k] * item.sum[k];
  }
  return out;
}

double nfm_logit(const FmParams& params, const SideSums& user, const SideSums& item) {
  const auto pool = pooled(user, item);
  const int32_t dim = params.dim;
  double out = params.w0 + user.linear + item.linear;
  for (int32_t r = 0; r < dim; ++r) {
    double a = params.b1[r];
    const double* wr = params.w1.data() + static_cast<size_t>(r) * dim;
    for (int32_t c = 0; c < dim; ++c) a += wr[c] * pool[c];
    if (a > 0.0) out += params.h[r] * a;
  }
  return out;
}

double logit(Backbone backbone, const FmParams& params, const SideSums& user,
             const SideSums& item) {
  return backbone == Backbone::kFm ? fm_logit(params, user, item)
                                   : nfm_logit(params, user, item);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double fm_score(const FmParams& params, const SparseInstance& instance,
                std::span<const std::vector<double>> extras) {
  return score(Backbone::kFm, params, instance, extras);
}

double nfm_score(const FmParams& params, const SparseInstance& instance,
                 std::span<const std::vector<double>> extras) {
  return score(Backbone::kNfm, params, instance, extras);
}

double score(Backbone backbone, const FmParams& params, const SparseInstance& instance,
             std::span<const std::vector<double>> extras) {
  if (instance.user.empty() && instance.item.empty()) {
    throw std::invalid_argument("score: empty instance");
  }
  const SideSums user = side_sums(params, instance.user, extras);
  const SideSums item = side_sums(params, instance.item);
  return sigmoid(logit(backbone, params, user, item));
}

double log_loss(double y, int label) {
  const double c = std::clamp(y, kScoreClamp, 1.0 - kScoreClamp);
  return label ? -std::log(c) : -std::log(1.0 - c);
}

Gradients backward(Backbone backbone, const FmParams& params, const SparseInstance& instance,
                   int label, std::span<const std::vector<double>> extras,
                   std::span<const double> dropout_mask) {
  if (instance.user.empty() && instance.item.empty()) {
    throw std::invalid_argument("backward: empty instance");
  }
  const int32_t dim = params.dim;
  const Forward fw = forward(backbone, params, instance, extras, dropout_mask);

  Gradients g;
  g.score = sigmoid(fw.logit);
  g.loss = log_loss(g.score, label);
  const double dlogit = g.score - static_cast<double>(label);
  g.w0 = dlogit;

  // dL/dpool (pre-dropout).
  std::vector<double> gpool(dim, dlogit);
  if (backbone == Backbone::kNfm) {
    g.h.assign(dim, 0.0);
    g.b1.assign(dim, 0.0);
    g.w1.assign(static_cast<size_t>(dim) * dim, 0.0);
    std::fill(gpool.begin(), gpool.end(), 0.0);
    for (int32_t r = 0; r < dim; ++r) {
      if (fw.hidden[r] <= 0.0) continue;
      g.h[r] = dlogit * fw.hidden[r];
      const double da = dlogit * params.h[r];
      g.b1[r] = da;
      const double* wr = params.w1.data() + static_cast<size_t>(r) * dim;
      double* gw = g.w1.data() + static_cast<size_t>(r) * dim;
      for (int32_t c = 0; c < dim; ++c) {
        gw[c] = da * fw.pool[c];
        gpool[c] += da * wr[c];
      }
    }
  }
  if (!dropout_mask.empty()) {
    for (int32_t k = 0; k < dim; ++k) gpool[k] *= dropout_mask[k];
  }

  std::vector<double> total(dim);
  for (int32_t k = 0; k < dim; ++k) total[k] = fw.user.sum[k] + fw.item.sum[k];

  const size_t n = instance.user.size() + instance.item.size();
  g.features.reserve(n);
  g.w.reserve(n);
  g.emb.resize(n * dim);
  size_t slot = 0;
  auto visit = [&](const Feature& f) {
    g.features.push_back(f.id);
    g.w.push_back(dlogit * f.value);
    auto e = params.row(f.id);
    double* out = g.emb.data() + slot * dim;
    for (int32_t k = 0; k < dim; ++k) {
      // d pool / d z_a = S - z_a; d z_a / d e_a = x_a.
      out[k] = gpool[k] * (total[k] - f.value * e[k]) * f.value;
    }
    ++slot;
  };
  for (const Feature& f : instance.user) visit(f);
  for (const Feature& f : instance.item) visit(f);

  g.extras.reserve(extras.size());
  for (const auto& m : extras) {
    std::vector<double> gm(dim);
    for (int32_t k = 0; k < dim; ++k) gm[k] = gpool[k] * (total[k] - m[k]);
    g.extras.push_back(std::move(gm));
  }
  return g;
}

void adagrad_step(std::span<double> param, std::span<double> accum, std::span<const double> grad,
                  double lr) {
  if (param.size() != accum.size() || param.size() != grad.size()) {
    throw std::invalid_argument("adagrad_step: size mismatch");
  }
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    accum[i] += g * g;
    param[i] -= lr * g / (std::sqrt(accum[i]) + kAdagradEpsilon);
  }
}

}  // namespace decrs
