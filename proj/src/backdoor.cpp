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

#include "decrs/backdoor.hpp"

#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace decrs {
namespace {

void check_shapes(std::span<const double> dbar, std::span<const double> group_vecs,
                  std::span<const double> x_u, std::span<const double> user_vecs, int32_t dim) {
  if (dim <= 0) throw std::invalid_argument("group_repr: dim must be positive");
  if (group_vecs.size() != dbar.size() * dim) {
    throw std::invalid_argument(fmt::format("group_repr: {} group values for N={} and dim={}",
                                            group_vecs.size(), dbar.size(), dim));
  }
  if (user_vecs.size() != x_u.size() * dim) {
    throw std::invalid_argument(fmt::format("group_repr: {} user values for K={} and dim={}",
                                            user_vecs.size(), x_u.size(), dim));
  }
  if (x_u.empty()) throw std::invalid_argument("group_repr: user part is empty");
}

// sum_a weights[a] * vecs[a]
std::vector<double> weighted_sum(std::span<const double> weights, std::span<const double> vecs,
                                 int32_t dim) {
  std::vector<double> out(dim, 0.0);
  for (size_t a = 0; a < weights.size(); ++a) {
    const double* row = vecs.data() + a * dim;
    for (int32_t k = 0; k < dim; ++k) out[k] += weights[a] * row[k];
  }
  return out;
}

std::vector<double> gather_user(const FmParams& params, std::span<const Feature> user,
                                std::vector<double>& x_u) {
  x_u.clear();
  std::vector<double> vecs;
  vecs.reserve(user.size() * params.dim);
  for (const Feature& f : user) {
    x_u.push_back(f.value);
    auto r = params.row(f.id);
    vecs.insert(vecs.end(), r.begin(), r.end());
  }
  return vecs;
}

}  // namespace

std::string_view to_string(GroupOperator op) {
  return op == GroupOperator::kElementProduct ? "ep" : "fm";
}

GroupOperator parse_group_operator(std::string_view name) {
  if (name == "ep" || name == "element-product") return GroupOperator::kElementProduct;
  if (name == "fm" || name == "fm-module") return GroupOperator::kFmModule;
  throw std::invalid_argument(fmt::format("unknown group operator '{}'", name));
}

std::vector<double> group_repr_ep(std::span<const double> dbar, std::span<const double> group_vecs,
                                  std::span<const double> x_u, std::span<const double> user_vecs,
                                  int32_t dim) {
  check_shapes(dbar, group_vecs, x_u, user_vecs, dim);
  auto m = weighted_sum(dbar, group_vecs, dim);
  const auto u = weighted_sum(x_u, user_vecs, dim);
  for (int32_t k = 0; k < dim; ++k) m[k] *= u[k];
  return m;
}

std::vector<double> group_repr_fm(std::span<const double> dbar, std::span<const double> group_vecs,
                                  std::span<const double> x_u, std::span<const double> user_vecs,
                                  int32_t dim) {
  check_shapes(dbar, group_vecs, x_u, user_vecs, dim);
  auto s = weighted_sum(dbar, group_vecs, dim);
  const auto u = weighted_sum(x_u, user_vecs, dim);
  for (int32_t k = 0; k < dim; ++k) {
    s[k] += u[k];
    s[k] *= s[k];
  }
  return s;
}

std::vector<double> group_repr(GroupOperator op, std::span<const double> dbar,
                               std::span<const double> group_vecs, std::span<const double> x_u,
                               std::span<const double> user_vecs, int32_t dim) {
  return op == GroupOperator::kElementProduct
             ? group_repr_ep(dbar, group_vecs, x_u, user_vecs, dim)
             : group_repr_fm(dbar, group_vecs, x_u, user_vecs, dim);
}

GroupReprGrad group_repr_backward(GroupOperator op, std::span<const double> dbar,
                                  std::span<const double> group_vecs,
                                  std::span<const double> x_u,
                                  std::span<const double> user_vecs, int32_t dim,
                                  std::span<const double> grad_m) {
  check_shapes(dbar, group_vecs, x_u, user_vecs, dim);
  if (static_cast<int32_t>(grad_m.size()) != dim) {
    throw std::invalid_argument("group_repr_backward: gradient length mismatch");
  }
  const auto gsum = weighted_sum(dbar, group_vecs, dim);
  const auto usum = weighted_sum(x_u, user_vecs, dim);
  // Per-side upstream: the gradient w.r.t. each weighted sum.
  std::vector<double> g_group(dim), g_user(dim);
  if (op == GroupOperator::kElementProduct) {
    for (int32_t k = 0; k < dim; ++k) {
      g_group[k] = grad_m[k] * usum[k];
      g_user[k] = grad_m[k] * gsum[k];
    }
  } else {
    for (int32_t k = 0; k < dim; ++k) {
      g_group[k] = 2.0 * (gsum[k] + usum[k]) * grad_m[k];
      g_user[k] = g_group[k];
    }
  }
  GroupReprGrad out;
  out.group_vecs.resize(group_vecs.size());
  for (size_t a = 0; a < dbar.size(); ++a) {
    for (int32_t k = 0; k < dim; ++k) out.group_vecs[a * dim + k] = dbar[a] * g_group[k];
  }
  out.user_vecs.resize(user_vecs.size());
  for (size_t b = 0; b < x_u.size(); ++b) {
    for (int32_t k = 0; k < dim; ++k) out.user_vecs[b * dim + k] = x_u[b] * g_user[k];
  }
  return out;
}

Backdoor make_backdoor(GroupOperator op, std::vector<double> dbar, int32_t dim, uint64_t seed,
                       double init_std) {
  Backdoor b;
  b.op = op;
  b.v.resize(dbar.size() * dim);
  b.dbar = std::move(dbar);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_std);
  for (double& e : b.v) e = normal(rng);
  return b;
}

std::vector<double> group_representation(const Model& model, std::span<const Feature> user) {
  if (!model.backdoor) return {};
  const Backdoor& bd = *model.backdoor;
  std::vector<double> x_u;
  const auto user_vecs = gather_user(model.params, user, x_u);
  return group_repr(bd.op, bd.dbar, bd.v, x_u, user_vecs, model.params.dim);
}

double decrs_score(const Model& model, const SparseInstance& instance) {
  if (!model.backdoor) return score(model.backbone, model.params, instance);
  std::vector<std::vector<double>> extras{group_representation(model, instance.user)};
  return score(model.backbone, model.params, instance, extras);
}

ModelGradients model_backward(const Model& model, const SparseInstance& instance, int label,
                              std::span<const double> dropout_mask) {
  ModelGradients out;
  if (!model.backdoor) {
    out.core = backward(model.backbone, model.params, instance, label, {}, dropout_mask);
    return out;
  }
  const Backdoor& bd = *model.backdoor;
  const int32_t dim = model.params.dim;
  std::vector<double> x_u;
  const auto user_vecs = gather_user(model.params, instance.user, x_u);
  std::vector<std::vector<double>> extras{
      group_repr(bd.op, bd.dbar, bd.v, x_u, user_vecs, dim)};
  out.core = backward(model.backbone, model.params, instance, label, extras, dropout_mask);
  const GroupReprGrad chain =
      group_repr_backward(bd.op, bd.dbar, bd.v, x_u, user_vecs, dim, out.core.extras[0]);
  // User features occupy the first slots of core.features.
  for (size_t b = 0; b < instance.user.size(); ++b) {
    for (int32_t k = 0; k < dim; ++k) out.core.emb[b * dim + k] += chain.user_vecs[b * dim + k];
  }
  out.v = chain.group_vecs;
  return out;
}

}  // namespace decrs
