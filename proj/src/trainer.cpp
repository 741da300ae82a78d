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

#include "decrs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "decrs/confounder.hpp"
#include "decrs/error.hpp"

namespace decrs {
namespace {

template <typename T, size_t N>
bool contains(const T (&grid)[N], T value) {
  return std::find(std::begin(grid), std::end(grid), value) != std::end(grid);
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Dense gradient buffers with a touched-row list, reused across batches.
struct BatchGradients {
  explicit BatchGradients(const Model& model)
      : dim(model.params.dim),
        w(model.params.num_features, 0.0),
        emb(model.params.emb.size(), 0.0),
        mark(model.params.num_features, false),
        w1(model.params.w1.size(), 0.0),
        b1(model.params.b1.size(), 0.0),
        h(model.params.h.size(), 0.0),
        v(model.backdoor ? model.backdoor->v.size() : 0, 0.0) {}

  void add(const ModelGradients& g) {
    const Gradients& c = g.core;
    w0 += c.w0;
    for (size_t s = 0; s < c.features.size(); ++s) {
      const int32_t f = c.features[s];
      if (!mark[f]) {
        mark[f] = true;
        touched.push_back(f);
      }
      w[f] += c.w[s];
      double* row = emb.data() + static_cast<size_t>(f) * dim;
      const double* src = c.emb.data() + s * dim;
      for (int32_t k = 0; k < dim; ++k) row[k] += src[k];
    }
    for (size_t i = 0; i < c.w1.size(); ++i) w1[i] += c.w1[i];
    for (size_t i = 0; i < c.b1.size(); ++i) b1[i] += c.b1[i];
    for (size_t i = 0; i < c.h.size(); ++i) h[i] += c.h[i];
    for (size_t i = 0; i < g.v.size(); ++i) v[i] += g.v[i];
  }

  void reset() {
    w0 = 0.0;
    for (int32_t f : touched) {
      mark[f] = false;
      w[f] = 0.0;
      std::fill_n(emb.begin() + static_cast<ptrdiff_t>(f) * dim, dim, 0.0);
    }
    touched.clear();
    std::fill(w1.begin(), w1.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(h.begin(), h.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
  }

  int32_t dim;
  double w0 = 0.0;
  std::vector<double> w, emb;
  std::vector<bool> mark;
  std::vector<int32_t> touched;
  std::vector<double> w1, b1, h, v;
};

void apply(Model& model, OptimizerState& state, BatchGradients& g, double batch,
           const TrainConfig& config) {
  FmParams& p = model.params;
  const int32_t dim = p.dim;
  const double scale = 1.0 / batch;
  auto step = [&](double& param, double& accum, double grad) {
    adagrad_step({&param, 1}, {&accum, 1}, std::span<const double>(&grad, 1), config.lr);
  };
  step(p.w0, state.w0, g.w0 * scale);
  std::vector<double> row_grad(dim);
  for (int32_t f : g.touched) {
    step(p.w[f], state.w[f], g.w[f] * scale);
    auto row = p.row(f);
    const double* src = g.emb.data() + static_cast<size_t>(f) * dim;
    for (int32_t k = 0; k < dim; ++k) row_grad[k] = src[k] * scale + config.l2 * row[k];
    adagrad_step(row, {state.emb.data() + static_cast<size_t>(f) * dim, size_t(dim)}, row_grad,
                 config.lr);
  }
  auto dense = [&](std::vector<double>& param, std::vector<double>& accum,
                   std::vector<double>& grad, double l2, double lr) {
    if (param.empty() || lr == 0.0) return;
    for (size_t i = 0; i < grad.size(); ++i) grad[i] = grad[i] * scale + l2 * param[i];
    adagrad_step(param, accum, grad, lr);
  };
  dense(p.w1, state.w1, g.w1, 0.0, config.lr);
  dense(p.b1, state.b1, g.b1, 0.0, config.lr);
  dense(p.h, state.h, g.h, 0.0, config.lr);
  if (model.backdoor) {
    const double group_lr = config.group_lr < 0.0 ? config.lr : config.group_lr;
    dense(model.backdoor->v, state.v, g.v, config.l2, group_lr);
  }
}

}  // namespace

bool on_grid(const TrainConfig& c) {
  return contains(TrainGrid::kLearningRates, c.lr) && contains(TrainGrid::kBatchSizes, c.batch_size) &&
         contains(TrainGrid::kL2, c.l2) && contains(TrainGrid::kDropouts, c.dropout);
}

void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0)) throw ConfigError(fmt::format("lr must be > 0, got {}", c.lr));
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.patience < 1) throw ConfigError("patience must be >= 1");
  if (c.negatives < 1) throw ConfigError("negatives must be >= 1");
}

OptimizerState OptimizerState::for_model(const Model& model) {
  OptimizerState s;
  s.w.assign(model.params.w.size(), 0.0);
  s.emb.assign(model.params.emb.size(), 0.0);
  s.w1.assign(model.params.w1.size(), 0.0);
  s.b1.assign(model.params.b1.size(), 0.0);
  s.h.assign(model.params.h.size(), 0.0);
  if (model.backdoor) s.v.assign(model.backdoor->v.size(), 0.0);
  return s;
}

double train_epoch(Model& model, OptimizerState& state, std::vector<TrainingInstance> instances,
                   const FeatureEncoder& encoder, const TrainConfig& config, uint64_t epoch_seed) {
  if (instances.empty()) throw DataError("train_epoch: no training instances");
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(instances.begin(), instances.end(), rng);

  const bool use_dropout = model.backbone == Backbone::kNfm && config.dropout > 0.0;
  std::vector<double> mask;
  std::bernoulli_distribution keep(1.0 - config.dropout);
  BatchGradients grads(model);
  double loss_sum = 0.0;
  const size_t batch = static_cast<size_t>(config.batch_size);
  for (size_t start = 0; start < instances.size(); start += batch) {
    const size_t end = std::min(instances.size(), start + batch);
    grads.reset();
    double batch_loss = 0.0;
    for (size_t i = start; i < end; ++i) {
      const auto& t = instances[i];
      if (use_dropout) {
        mask.resize(model.params.dim);
        for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - config.dropout) : 0.0;
      }
      const ModelGradients g = model_backward(model, encoder.encode(t.user, t.item), t.label, mask);
      batch_loss += g.core.loss;
      grads.add(g);
    }
    if (!std::isfinite(batch_loss)) {
      throw TrainingError(fmt::format("non-finite loss in batch starting at instance {} "
                                      "(lr={}, l2={})",
                                      start, config.lr, config.l2));
    }
    loss_sum += batch_loss;
    apply(model, state, grads, static_cast<double>(end - start), config);
  }
  return loss_sum / static_cast<double>(instances.size());
}

TrainResult train(Model model, const InstanceSource& source, const FeatureEncoder& encoder,
                  const TrainConfig& config, const ValidationHook& hook) {
  validate(config);
  OptimizerState state = OptimizerState::for_model(model);
  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    try {
      stats.loss = train_epoch(model, state, source(epoch), encoder, config,
                               mix_seed(config.seed, static_cast<uint64_t>(epoch)));
    } catch (const TrainingError& e) {
      throw TrainingError(fmt::format("epoch {}: {}", epoch, e.what()));
    }
    stats.valid_recall = std::numeric_limits<double>::quiet_NaN();
    if (hook) {
      stats.valid_recall = hook(model);
      result.log.push_back(stats);
      if (stats.valid_recall > best) {
        best = stats.valid_recall;
        result.model = model;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    } else {
      result.log.push_back(stats);
    }
  }
  if (!hook) {
    result.model = std::move(model);
    result.best_epoch = static_cast<int>(result.log.size());
  }
  return result;
}

TrainResult train(Model model, const DatasetSplit& split, const FeatureEncoder& encoder,
                  const TrainConfig& config, const ValidationHook& hook) {
  InstanceSource source = [&](int epoch) {
    return sample_negatives(split, config.negatives, config.seed + static_cast<uint64_t>(epoch));
  };
  return train(std::move(model), source, encoder, config, hook);
}

Model make_model(Backbone backbone, int32_t num_features, int32_t dim, uint64_t seed) {
  Model m;
  m.backbone = backbone;
  m.params = init_params(backbone, num_features, dim, seed);
  return m;
}

Model make_decrs_model(Backbone backbone, GroupOperator op, int32_t num_features, int32_t dim,
                       std::vector<double> dbar, uint64_t seed) {
  Model m = make_model(backbone, num_features, dim, seed);
  m.backdoor = make_backdoor(op, std::move(dbar), dim, mix_seed(seed, 0xB0B));
  return m;
}

TrainResult train_decrs(const DatasetSplit& split, const FeatureEncoder& encoder,
                        Backbone backbone, GroupOperator op, int32_t dim,
                        const TrainConfig& config, const ValidationHook& hook) {
  const ConfounderPrior prior = confounder_prior(split.history, encoder.groups());
  Model model = make_decrs_model(backbone, op, encoder.schema().num_features(), dim,
                                 prior.expectation.p, config.seed);
  return train(std::move(model), split, encoder, config, hook);
}

}  // namespace decrs
