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

#include "decrs/confounder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "decrs/error.hpp"

namespace decrs {

bool is_simplex(std::span<const double> p, double tol) {
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    total += x;
  }
  return std::abs(total - 1.0) <= tol;
}

GroupDistribution user_group_distribution(std::span<const int32_t> history,
                                          const GroupTable& groups) {
  if (history.empty()) throw DataError("user_group_distribution: empty history");
  GroupDistribution d;
  d.p.assign(groups.num_groups(), 0.0);
  for (int32_t item : history) {
    const auto q = groups.q(item);
    for (size_t n = 0; n < q.size(); ++n) d.p[n] += q[n];
  }
  const double inv = 1.0 / static_cast<double>(history.size());
  for (double& x : d.p) x *= inv;
  return d;
}

ConfounderPrior confounder_prior(const std::vector<std::vector<int32_t>>& histories,
                                 const GroupTable& groups) {
  ConfounderPrior prior;
  size_t total = 0;
  for (const auto& h : histories) total += h.size();
  if (total == 0) throw DataError("confounder_prior: every history is empty");
  prior.expectation.p.assign(groups.num_groups(), 0.0);
  for (size_t u = 0; u < histories.size(); ++u) {
    const auto& h = histories[u];
    if (h.empty()) continue;
    prior.users.push_back(static_cast<int32_t>(u));
    prior.entries.push_back(user_group_distribution(h, groups));
    prior.weights.push_back(static_cast<double>(h.size()) / static_cast<double>(total));
    const auto& d = prior.entries.back();
    for (size_t n = 0; n < d.size(); ++n) prior.expectation.p[n] += prior.weights.back() * d[n];
  }
  return prior;
}

std::pair<GroupDistribution, GroupDistribution> split_history_distributions(
    std::span<const int32_t> history, const GroupTable& groups) {
  if (history.size() < 2) {
    throw DataError("split_history_distributions: need at least two history items");
  }
  const size_t half = history.size() / 2;
  return {user_group_distribution(history.first(half), groups),
          user_group_distribution(history.subspan(half), groups)};
}

double symmetric_kl(std::span<const double> a, std::span<const double> b, double smoothing) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(
        fmt::format("symmetric_kl: length mismatch ({} vs {})", a.size(), b.size()));
  }
  if (a.empty()) return 0.0;
  const double uniform = smoothing / static_cast<double>(a.size());
  double total = 0.0;
  for (size_t n = 0; n < a.size(); ++n) {
    const double p = (1.0 - smoothing) * a[n] + uniform;
    const double q = (1.0 - smoothing) * b[n] + uniform;
    // p log(p/q) + q log(q/p), accumulated per component so the sum is
    // symmetric in (a, b) bit for bit.
    total += (p - q) * (std::log(p) - std::log(q));
  }
  return total;
}

double normalize_drift(double eta, double eta_min, double eta_max, double alpha) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument(fmt::format("normalize_drift: alpha must be > 0, got {}", alpha));
  }
  if (!(eta_max > eta_min)) return 0.0;
  const double t = std::clamp((eta - eta_min) / (eta_max - eta_min), 0.0, 1.0);
  return std::pow(t, alpha);
}

DriftTable compute_drift(const std::vector<std::vector<int32_t>>& histories,
                         const GroupTable& groups, double alpha) {
  DriftTable table;
  table.alpha = alpha;
  table.users.resize(histories.size());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t u = 0; u < histories.size(); ++u) {
    auto& s = table.users[u];
    s.user = static_cast<int32_t>(u);
    if (histories[u].size() < 2) continue;
    const auto [d1, d2] = split_history_distributions(histories[u], groups);
    s.eta = symmetric_kl(d1.p, d2.p);
    s.observed = true;
    lo = std::min(lo, s.eta);
    hi = std::max(hi, s.eta);
  }
  if (lo > hi) lo = hi = 0.0;
  table.eta_min = lo;
  table.eta_max = hi;
  for (auto& s : table.users) {
    if (!s.observed) s.eta = lo;
  }
  return with_alpha(table, alpha);
}

DriftTable with_alpha(const DriftTable& table, double alpha) {
  DriftTable out = table;
  out.alpha = alpha;
  for (auto& s : out.users) s.eta_hat = normalize_drift(s.eta, out.eta_min, out.eta_max, alpha);
  return out;
}

void write_drift(const std::filesystem::path& path, const DriftTable& table) {
  auto out = fmt::output_file(path.string());
  out.print("# eta_min={} eta_max={} alpha={}\n", table.eta_min, table.eta_max, table.alpha);
  out.print("user\teta\teta_hat\tobserved\n");
  for (const auto& s : table.users) {
    out.print("{}\t{}\t{}\t{}\n", s.user, s.eta, s.eta_hat, s.observed ? 1 : 0);
  }
}

DriftTable read_drift(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open drift table {}", path.string()));
  DriftTable table;
  std::string line;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# eta_min=%lf eta_max=%lf alpha=%lf", &table.eta_min,
                  &table.eta_max, &table.alpha) != 3) {
    throw ParseError(fmt::format("{}: missing drift header", path.string()));
  }
  std::getline(in, line);  // column names
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    DriftScore s;
    int observed = 0;
    if (!(row >> s.user >> s.eta >> s.eta_hat >> observed)) {
      throw ParseError(fmt::format("{}: malformed drift row '{}'", path.string(), line));
    }
    s.observed = observed != 0;
    table.users.push_back(s);
  }
  return table;
}

}  // namespace decrs
