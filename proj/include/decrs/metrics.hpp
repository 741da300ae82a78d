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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decrs/confounder.hpp"
#include "decrs/corpus.hpp"
#include "decrs/inference.hpp"

namespace decrs {

// `relevant` must be sorted and nonempty.
double recall_at_k(const RankedList& list, std::span<const int32_t> relevant, int k);
// Binary gains, 1/log2(rank + 1) discounts, ideal DCG over min(|relevant|, k).
double ndcg_at_k(const RankedList& list, std::span<const int32_t> relevant, int k);

inline constexpr double kCalibrationSmoothing = 0.01;
inline constexpr int kCalibrationListLength = 20;

// Mean q^i over the listed items.
std::vector<double> list_group_distribution(std::span<const RankedItem> items,
                                            const GroupTable& groups);

// KL(p || (1 - beta) q + beta p), natural log.
double calibration_kl(std::span<const double> p, std::span<const double> q,
                      double beta = kCalibrationSmoothing);

// C_KL between a history distribution and the group mix of `list`.
double c_kl(std::span<const double> history, const RankedList& list, const GroupTable& groups,
            double beta = kCalibrationSmoothing);

inline constexpr double kDriftThresholds[] = {0.0, 0.5, 1.0, 2.0, 3.0, 4.0};

struct BucketRow {
  double threshold = 0.0;
  int64_t count = 0;
  std::optional<double> mean;  // absent for an empty bucket
};

// Mean of `metric` over users with eta > threshold, per threshold.
std::vector<BucketRow> drift_bucket_report(std::span<const double> metric,
                                           std::span<const double> eta,
                                           std::span<const double> thresholds);

// Greedy calibrated re-rank: each step appends the candidate maximizing
// (1 - lambda) * score - lambda * C_KL(history, list + candidate), i.e. the
// list objective up to the score sum shared by all candidates at that step.
RankedList calibration_rerank(int32_t user, std::span<const RankedItem> candidates,
                              std::span<const double> history, const GroupTable& groups,
                              double lambda, int k);

struct UserMetrics {
  int32_t user = 0;
  double eta = 0.0;
  std::vector<double> recall;  // per k
  std::vector<double> ndcg;    // per k
  double c_kl = 0.0;
};

struct EvalReport {
  std::string label;
  std::vector<int> ks;
  std::vector<UserMetrics> users;
  std::vector<double> recall;  // means per k
  std::vector<double> ndcg;
  double c_kl = 0.0;
  // Mean group shares over evaluated users, history vs top-20 lists.
  std::vector<double> history_share;
  std::vector<double> recommended_share;

  // Per-user values of "R@k", "N@k" or "C_KL".
  std::vector<double> column(const std::string& metric) const;
  std::vector<std::string> metric_names() const;
  double mean(const std::string& metric) const;
};

// One list per evaluated user, each at least max(ks, 20) long when candidates
// allow. `relevant[u]` and `history[u]` are indexed by user id; `eta[u]` too.
EvalReport evaluate_lists(std::string label, const std::vector<RankedList>& lists,
                          const std::vector<std::vector<int32_t>>& relevant,
                          const std::vector<GroupDistribution>& history,
                          std::span<const double> eta, const GroupTable& groups,
                          std::vector<int> ks);

}  // namespace decrs
