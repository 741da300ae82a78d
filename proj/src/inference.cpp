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

#include "decrs/inference.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

namespace decrs {

double fuse_scores(double y_rs, double y_de, double eta_hat) {
  if (!(eta_hat >= 0.0 && eta_hat <= 1.0)) {
    throw std::invalid_argument(fmt::format("fuse_scores: eta_hat {} outside [0, 1]", eta_hat));
  }
  if (eta_hat == 0.0) return y_rs;
  if (eta_hat == 1.0) return y_de;
  return (1.0 - eta_hat) * y_rs + eta_hat * y_de;
}

std::vector<int32_t> candidate_items(const DatasetSplit& split, int32_t user) {
  std::vector<int32_t> out;
  out.reserve(split.num_items);
  const auto& seen = split.seen.at(user);
  auto it = seen.begin();
  for (int32_t i = 0; i < split.num_items; ++i) {
    if (it != seen.end() && *it == i) {
      ++it;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

RankedList rank_scores(int32_t user, std::span<const double> scores,
                       std::span<const int32_t> candidates, int k) {
  RankedList list;
  list.user = user;
  if (k <= 0) return list;
  list.items.reserve(candidates.size());
  for (int32_t i : candidates) list.items.push_back({i, scores[i]});
  const auto take = std::min(list.items.size(), static_cast<size_t>(k));
  std::partial_sort(list.items.begin(), list.items.begin() + static_cast<ptrdiff_t>(take),
                    list.items.end(), [](const RankedItem& a, const RankedItem& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.item < b.item;
                    });
  list.items.resize(take);
  return list;
}

ModelScorer::ModelScorer(const Model& model, const FeatureEncoder& encoder)
    : model_(&model), encoder_(&encoder) {
  if (encoder.schema().num_features() != model.params.num_features) {
    throw std::invalid_argument(
        fmt::format("ModelScorer: model has {} features, schema has {}",
                    model.params.num_features, encoder.schema().num_features()));
  }
  item_sides_.reserve(encoder.num_items());
  for (int32_t i = 0; i < encoder.num_items(); ++i) {
    item_sides_.push_back(side_sums(model.params, encoder.item_features(i)));
  }
}

std::vector<double> ModelScorer::score_items(int32_t user) const {
  const auto& feats = encoder_->user_features(user);
  std::vector<std::vector<double>> extras;
  if (model_->backdoor) extras.push_back(group_representation(*model_, feats));
  const SideSums user_side = side_sums(model_->params, feats, extras);
  std::vector<double> out(item_sides_.size());
  for (size_t i = 0; i < item_sides_.size(); ++i) {
    out[i] = sigmoid(logit(model_->backbone, model_->params, user_side, item_sides_[i]));
  }
  return out;
}

RankedList rank_single(const ModelScorer& model, int32_t user,
                       std::span<const int32_t> candidates, int k) {
  const auto scores = model.score_items(user);
  return rank_scores(user, scores, candidates, k);
}

RankedList rank_topk(const ModelScorer& rs_model, const ModelScorer& de_model, int32_t user,
                     double eta_hat, std::span<const int32_t> candidates, int k) {
  auto fused = rs_model.score_items(user);
  const auto de = de_model.score_items(user);
  for (int32_t i : candidates) fused[i] = fuse_scores(fused[i], de[i], eta_hat);
  return rank_scores(user, fused, candidates, k);
}

void write_rankings(const std::filesystem::path& path, const std::vector<RankedList>& lists,
                    const std::vector<std::string>& user_ids,
                    const std::vector<std::string>& item_ids) {
  auto out = fmt::output_file(path.string());
  out.print("# order: {}\nuser_id\trank\titem_id\tscore\n", kTieBreak);
  for (const auto& list : lists) {
    for (size_t r = 0; r < list.items.size(); ++r) {
      out.print("{}\t{}\t{}\t{}\n", user_ids.at(list.user), r + 1,
                item_ids.at(list.items[r].item), list.items[r].score);
    }
  }
}

}  // namespace decrs
