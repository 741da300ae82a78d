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

#include "decrs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace decrs {
namespace {

bool contains(std::span<const int32_t> sorted, int32_t item) {
  return std::binary_search(sorted.begin(), sorted.end(), item);
}

size_t cutoff(const RankedList& list, int k) {
  return std::min(list.items.size(), static_cast<size_t>(std::max(k, 0)));
}

}  // namespace

double recall_at_k(const RankedList& list, std::span<const int32_t> relevant, int k) {
  if (relevant.empty()) throw std::invalid_argument("recall_at_k: no relevant items");
  size_t hits = 0;
  for (size_t r = 0; r < cutoff(list, k); ++r) hits += contains(relevant, list.items[r].item);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(const RankedList& list, std::span<const int32_t> relevant, int k) {
  if (relevant.empty()) throw std::invalid_argument("ndcg_at_k: no relevant items");
  double dcg = 0.0;
  for (size_t r = 0; r < cutoff(list, k); ++r) {
    if (contains(relevant, list.items[r].item)) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double ideal = 0.0;
  const size_t n_ideal = std::min(relevant.size(), static_cast<size_t>(std::max(k, 0)));
  for (size_t r = 0; r < n_ideal; ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return ideal > 0.0 ? dcg / ideal : 0.0;
}

std::vector<double> list_group_distribution(std::span<const RankedItem> items,
                                            const GroupTable& groups) {
  std::vector<double> q(groups.num_groups(), 0.0);
  if (items.empty()) return q;
  for (const auto& it : items) {
    const auto qi = groups.q(it.item);
    for (size_t n = 0; n < q.size(); ++n) q[n] += qi[n];
  }
  for (double& x : q) x /= static_cast<double>(items.size());
  return q;
}

double calibration_kl(std::span<const double> p, std::span<const double> q, double beta) {
  if (p.size() != q.size()) {
    throw std::invalid_argument(
        fmt::format("calibration_kl: length mismatch ({} vs {})", p.size(), q.size()));
  }
  double kl = 0.0;
  for (size_t n = 0; n < p.size(); ++n) {
    if (p[n] <= 0.0) continue;
    const double qs = (1.0 - beta) * q[n] + beta * p[n];
    kl += p[n] * std::log(p[n] / qs);
  }
  return std::max(kl, 0.0);
}

double c_kl(std::span<const double> history, const RankedList& list, const GroupTable& groups,
            double beta) {
  if (static_cast<int32_t>(history.size()) != groups.num_groups()) {
    throw std::invalid_argument(fmt::format("c_kl: history has {} groups, table has {}",
                                            history.size(), groups.num_groups()));
  }
  return calibration_kl(history, list_group_distribution(list.items, groups), beta);
}

std::vector<BucketRow> drift_bucket_report(std::span<const double> metric,
                                           std::span<const double> eta,
                                           std::span<const double> thresholds) {
  if (metric.size() != eta.size()) {
    throw std::invalid_argument("drift_bucket_report: metric and eta sizes differ");
  }
  std::vector<BucketRow> rows;
  for (double t : thresholds) {
    BucketRow row;
    row.threshold = t;
    double sum = 0.0;
    for (size_t u = 0; u < eta.size(); ++u) {
      if (eta[u] > t) {
        sum += metric[u];
        ++row.count;
      }
    }
    if (row.count > 0) row.mean = sum / static_cast<double>(row.count);
    rows.push_back(row);
  }
  return rows;
}

RankedList calibration_rerank(int32_t user, std::span<const RankedItem> candidates,
                              std::span<const double> history, const GroupTable& groups,
                              double lambda, int k) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument(fmt::format("calibration_rerank: lambda {} outside [0, 1]", lambda));
  }
  if (static_cast<int32_t>(history.size()) != groups.num_groups()) {
    throw std::invalid_argument("calibration_rerank: history length mismatch");
  }
  const size_t n_groups = history.size();
  RankedList out;
  out.user = user;
  std::vector<bool> used(candidates.size(), false);
  std::vector<double> group_sum(n_groups, 0.0), q(n_groups);
  const size_t take = std::min(candidates.size(), static_cast<size_t>(std::max(k, 0)));
  for (size_t step = 0; step < take; ++step) {
    const double len = static_cast<double>(step + 1);
    size_t best = candidates.size();
    double best_obj = 0.0;
    for (size_t c = 0; c < candidates.size(); ++c) {
      if (used[c]) continue;
      double obj = (1.0 - lambda) * candidates[c].score;
      if (lambda > 0.0) {
        const auto qc = groups.q(candidates[c].item);
        for (size_t n = 0; n < n_groups; ++n) q[n] = (group_sum[n] + qc[n]) / len;
        obj -= lambda * calibration_kl(history, q);
      }
      if (best == candidates.size() || obj > best_obj ||
          (obj == best_obj && candidates[c].item < candidates[best].item)) {
        best = c;
        best_obj = obj;
      }
    }
    used[best] = true;
    const auto qb = groups.q(candidates[best].item);
    for (size_t n = 0; n < n_groups; ++n) group_sum[n] += qb[n];
    out.items.push_back(candidates[best]);
  }
  return out;
}

std::vector<std::string> EvalReport::metric_names() const {
  std::vector<std::string> names;
  for (int k : ks) names.push_back(fmt::format("R@{}", k));
  for (int k : ks) names.push_back(fmt::format("N@{}", k));
  names.push_back("C_KL");
  return names;
}

std::vector<double> EvalReport::column(const std::string& metric) const {
  std::vector<double> out;
  out.reserve(users.size());
  if (metric == "C_KL") {
    for (const auto& u : users) out.push_back(u.c_kl);
    return out;
  }
  for (size_t j = 0; j < ks.size(); ++j) {
    if (metric == fmt::format("R@{}", ks[j])) {
      for (const auto& u : users) out.push_back(u.recall[j]);
      return out;
    }
    if (metric == fmt::format("N@{}", ks[j])) {
      for (const auto& u : users) out.push_back(u.ndcg[j]);
      return out;
    }
  }
  throw std::invalid_argument(fmt::format("unknown metric '{}'", metric));
}

double EvalReport::mean(const std::string& metric) const {
  const auto col = column(metric);
  if (col.empty()) return 0.0;
  double s = 0.0;
  for (double x : col) s += x;
  return s / static_cast<double>(col.size());
}

EvalReport evaluate_lists(std::string label, const std::vector<RankedList>& lists,
                          const std::vector<std::vector<int32_t>>& relevant,
                          const std::vector<GroupDistribution>& history,
                          std::span<const double> eta, const GroupTable& groups,
                          std::vector<int> ks) {
  EvalReport report;
  report.label = std::move(label);
  report.ks = std::move(ks);
  const size_t n_groups = static_cast<size_t>(groups.num_groups());
  report.history_share.assign(n_groups, 0.0);
  report.recommended_share.assign(n_groups, 0.0);
  for (const auto& list : lists) {
    UserMetrics m;
    m.user = list.user;
    m.eta = eta.empty() ? 0.0 : eta[list.user];
    const auto& rel = relevant.at(list.user);
    for (int k : report.ks) {
      m.recall.push_back(recall_at_k(list, rel, k));
      m.ndcg.push_back(ndcg_at_k(list, rel, k));
    }
    RankedList top = list;
    if (top.items.size() > static_cast<size_t>(kCalibrationListLength)) {
      top.items.resize(kCalibrationListLength);
    }
    const auto& hist = history.at(list.user);
    m.c_kl = c_kl(hist.p, top, groups);
    const auto rec = list_group_distribution(top.items, groups);
    for (size_t n = 0; n < n_groups; ++n) {
      report.history_share[n] += hist[n];
      report.recommended_share[n] += rec[n];
    }
    report.users.push_back(std::move(m));
  }
  const double n_users = static_cast<double>(std::max<size_t>(report.users.size(), 1));
  for (size_t n = 0; n < n_groups; ++n) {
    report.history_share[n] /= n_users;
    report.recommended_share[n] /= n_users;
  }
  for (size_t j = 0; j < report.ks.size(); ++j) {
    report.recall.push_back(report.mean(fmt::format("R@{}", report.ks[j])));
    report.ndcg.push_back(report.mean(fmt::format("N@{}", report.ks[j])));
  }
  report.c_kl = report.mean("C_KL");
  return report;
}

}  // namespace decrs
