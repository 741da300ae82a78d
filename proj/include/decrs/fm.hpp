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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace decrs {

struct Feature {
  int32_t id = 0;
  double value = 1.0;
};

// Active features of one (user, item) pair. Ids are unique within an instance.
struct SparseInstance {
  std::vector<Feature> user;
  std::vector<Feature> item;
};

enum class Backbone : uint8_t { kFm, kNfm };

// FM parameters; the NFM hidden layer is empty for plain FM.
struct FmParams {
  int32_t dim = 64;
  int32_t num_features = 0;
  double w0 = 0.0;
  std::vector<double> w;
  std::vector<double> emb;  // num_features x dim
  // NFM: w1 is dim x dim row-major, applied as a = w1 * pool + b1.
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> h;

  std::span<double> row(int32_t feature) {
    return {emb.data() + static_cast<size_t>(feature) * dim, static_cast<size_t>(dim)};
  }
  std::span<const double> row(int32_t feature) const {
    return {emb.data() + static_cast<size_t>(feature) * dim, static_cast<size_t>(dim)};
  }
};

// Embeddings ~ N(0, init_std); linear weights and biases zero. NFM's hidden
// matrix and projection use Glorot-normal so the MLP starts with a live gradient.
FmParams init_params(Backbone backbone, int32_t num_features, int32_t dim, uint64_t seed,
                     double init_std = 0.01);

// Aggregates over one side's interaction vectors z: linear part, sum of z and
// the within-side pairwise products 0.5 * ((sum z)^2 - sum z^2), elementwise.
// Extra vectors join the interactions but carry no linear weight.
struct SideSums {
  double linear = 0.0;
  std::vector<double> sum;
  std::vector<double> pairs;
};

SideSums side_sums(const FmParams& params, std::span<const Feature> features,
                   std::span<const std::vector<double>> extras = {});

// Bi-interaction pooling of a whole instance from its two sides.
std::vector<double> pooled(const SideSums& user, const SideSums& item);

// Pre-sigmoid output from the two sides.
double fm_logit(const FmParams& params, const SideSums& user, const SideSums& item);
double nfm_logit(const FmParams& params, const SideSums& user, const SideSums& item);
double logit(Backbone backbone, const FmParams& params, const SideSums& user,
             const SideSums& item);

double sigmoid(double x);

// Extra dense vectors (length dim) are treated as additional user-side
// interaction participants.
double fm_score(const FmParams& params, const SparseInstance& instance,
                std::span<const std::vector<double>> extras = {});
double nfm_score(const FmParams& params, const SparseInstance& instance,
                 std::span<const std::vector<double>> extras = {});
double score(Backbone backbone, const FmParams& params, const SparseInstance& instance,
             std::span<const std::vector<double>> extras = {});

inline constexpr double kScoreClamp = 1e-7;

// Binary cross-entropy with y clamped to [1e-7, 1 - 1e-7].
double log_loss(double y, int label);

// Gradients of log_loss(score(.), label) w.r.t. every touched parameter.
struct Gradients {
  double score = 0.0;
  double loss = 0.0;
  double w0 = 0.0;
  std::vector<int32_t> features;   // user features, then item features
  std::vector<double> w;           // one per entry of `features`
  std::vector<double> emb;         // dim per entry of `features`
  std::vector<std::vector<double>> extras;
  std::vector<double> w1, b1, h;   // NFM only
};

// `dropout_mask`, when given, multiplies the pooling vector (NFM, training).
Gradients backward(Backbone backbone, const FmParams& params, const SparseInstance& instance,
                   int label, std::span<const std::vector<double>> extras = {},
                   std::span<const double> dropout_mask = {});

inline constexpr double kAdagradEpsilon = 1e-8;

// accum += g^2; param -= lr * g / (sqrt(accum) + 1e-8).
void adagrad_step(std::span<double> param, std::span<double> accum, std::span<const double> grad,
                  double lr);

}  // namespace decrs
