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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decrs/backdoor.hpp"
#include "decrs/corpus.hpp"

namespace decrs {

struct RankedItem {
  int32_t item = 0;
  double score = 0.0;

  friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

// Scores non-increasing; equal scores ordered by item id ascending.
struct RankedList {
  int32_t user = 0;
  std::vector<RankedItem> items;
};

inline constexpr std::string_view kTieBreak = "score desc, item_id asc";

// (1 - eta_hat) * y_rs + eta_hat * y_de.
double fuse_scores(double y_rs, double y_de, double eta_hat);

// All items without a training interaction for `user`, ascending.
std::vector<int32_t> candidate_items(const DatasetSplit& split, int32_t user);

// Top-k of `candidates` under `scores` (indexed by item id). k larger than the
// candidate count returns all of them.
RankedList rank_scores(int32_t user, std::span<const double> scores,
                       std::span<const int32_t> candidates, int k);

// Scores every item for one user with frozen parameters. Item-side sums are
// cached at construction; the model and encoder must outlive the scorer.
class ModelScorer {
 public:
  ModelScorer(const Model& model, const FeatureEncoder& encoder);

  std::vector<double> score_items(int32_t user) const;
  const Model& model() const { return *model_; }

 private:
  const Model* model_;
  const FeatureEncoder* encoder_;
  std::vector<SideSums> item_sides_;
};

RankedList rank_single(const ModelScorer& model, int32_t user,
                       std::span<const int32_t> candidates, int k);

// Scores with both models and fuses them per user.
RankedList rank_topk(const ModelScorer& rs_model, const ModelScorer& de_model, int32_t user,
                     double eta_hat, std::span<const int32_t> candidates, int k);

// Rows of (user_id, rank, item_id, score), rank starting at 1.
void write_rankings(const std::filesystem::path& path, const std::vector<RankedList>& lists,
                    const std::vector<std::string>& user_ids,
                    const std::vector<std::string>& item_ids);

}  // namespace decrs
