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
#include <utility>
#include <vector>

#include "decrs/corpus.hpp"

namespace decrs {

// Click frequency over item groups; sums to 1 for a nonempty history.
struct GroupDistribution {
  std::vector<double> p;

  size_t size() const { return p.size(); }
  double operator[](size_t n) const { return p[n]; }
  friend bool operator==(const GroupDistribution&, const GroupDistribution&) = default;
};

bool is_simplex(std::span<const double> p, double tol = 1e-9);

// Mean of q^i over the history.
GroupDistribution user_group_distribution(std::span<const int32_t> history,
                                          const GroupTable& groups);

// Sampled prior over D: one entry per user with a nonempty history, weighted
// by |H_u| / sum_v |H_v|, plus the expectation d-bar.
struct ConfounderPrior {
  std::vector<int32_t> users;
  std::vector<GroupDistribution> entries;
  std::vector<double> weights;
  GroupDistribution expectation;
};

ConfounderPrior confounder_prior(const std::vector<std::vector<int32_t>>& histories,
                                 const GroupTable& groups);

// First floor(|H|/2) items vs the remainder.
std::pair<GroupDistribution, GroupDistribution> split_history_distributions(
    std::span<const int32_t> history, const GroupTable& groups);

inline constexpr double kDriftSmoothing = 1e-6;

// KL(a||b) + KL(b||a), natural log, after mixing each side with the uniform
// distribution at weight `smoothing`.
double symmetric_kl(std::span<const double> a, std::span<const double> b,
                    double smoothing = kDriftSmoothing);

// ((eta - eta_min) / (eta_max - eta_min))^alpha, 0 when eta_max == eta_min.
double normalize_drift(double eta, double eta_min, double eta_max, double alpha);

struct DriftScore {
  int32_t user = 0;
  double eta = 0.0;
  double eta_hat = 0.0;
  bool observed = false;  // history had >= 2 items
};

struct DriftTable {
  std::vector<DriftScore> users;  // indexed by user
  double eta_min = 0.0;
  double eta_max = 0.0;
  double alpha = 1.0;
};

// eta from training histories. Users with fewer than two history items get
// eta_min. eta_min/eta_max range over observed users only.
DriftTable compute_drift(const std::vector<std::vector<int32_t>>& histories,
                         const GroupTable& groups, double alpha);
// Same etas, eta_hat recomputed for another alpha.
DriftTable with_alpha(const DriftTable& table, double alpha);

// "user<TAB>eta<TAB>eta_hat<TAB>observed" rows after a commented header line.
void write_drift(const std::filesystem::path& path, const DriftTable& table);
DriftTable read_drift(const std::filesystem::path& path);

}  // namespace decrs
