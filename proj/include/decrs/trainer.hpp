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
#include <functional>
#include <vector>

#include "decrs/backdoor.hpp"
#include "decrs/corpus.hpp"

namespace decrs {

struct TrainConfig {
  double lr = 0.05;
  int batch_size = 512;
  double l2 = 0.0;
  double dropout = 0.3;  // NFM only
  int epochs = 100;
  int patience = 10;
  uint64_t seed = 1;
  int negatives = 1;
  // Learning rate for the group embeddings v; negative means `lr`.
  double group_lr = -1.0;
};

// Hyperparameter grids used for model selection.
struct TrainGrid {
  static constexpr double kLearningRates[] = {0.005, 0.01, 0.05};
  static constexpr int kBatchSizes[] = {512, 1024, 2048};
  static constexpr double kL2[] = {0.0, 0.1, 0.2};
  static constexpr double kDropouts[] = {0.2, 0.3, 0.4, 0.5};
};

// True when every tunable value of `config` is a grid point.
bool on_grid(const TrainConfig& config);
void validate(const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;          // mean log loss over the epoch's instances
  double valid_recall = 0.0;  // NaN without a validation hook
};

struct TrainResult {
  Model model;  // best-validation checkpoint
  std::vector<EpochStats> log;
  int best_epoch = 0;
};

// Returns validation Recall@10 for the current parameters.
using ValidationHook = std::function<double(const Model&)>;
// Training instances for a given epoch (1-based).
using InstanceSource = std::function<std::vector<TrainingInstance>(int epoch)>;

// Adagrad accumulators shaped like the model.
struct OptimizerState {
  double w0 = 0.0;
  std::vector<double> w, emb, w1, b1, h, v;

  static OptimizerState for_model(const Model& model);
};

// One pass of shuffled mini-batch Adagrad. Returns the mean log loss.
double train_epoch(Model& model, OptimizerState& state,
                   std::vector<TrainingInstance> instances, const FeatureEncoder& encoder,
                   const TrainConfig& config, uint64_t epoch_seed);

// Mini-batch Adagrad with early stopping on `hook`; stops after `patience`
// epochs without improvement and returns the best checkpoint.
TrainResult train(Model model, const InstanceSource& source, const FeatureEncoder& encoder,
                  const TrainConfig& config, const ValidationHook& hook = {});

// Negatives are redrawn every epoch with seed = config.seed + epoch.
TrainResult train(Model model, const DatasetSplit& split, const FeatureEncoder& encoder,
                  const TrainConfig& config, const ValidationHook& hook = {});

// Backbone plus backdoor with d-bar from the training histories, trained
// jointly. The backbone is initialized exactly as the plain model would be.
Model make_model(Backbone backbone, int32_t num_features, int32_t dim, uint64_t seed);
Model make_decrs_model(Backbone backbone, GroupOperator op, int32_t num_features, int32_t dim,
                       std::vector<double> dbar, uint64_t seed);

// d-bar is computed once from the split's training histories and frozen.
TrainResult train_decrs(const DatasetSplit& split, const FeatureEncoder& encoder,
                        Backbone backbone, GroupOperator op, int32_t dim,
                        const TrainConfig& config, const ValidationHook& hook = {});

}  // namespace decrs
