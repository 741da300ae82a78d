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
#include <string_view>
#include <vector>

#include "decrs/fm.hpp"

namespace decrs {

// How the group-level user representation M(d-bar, u) is formed.
//  kElementProduct: (sum_a d_a v_a) (.) (sum_b x_b u_b)
//  kFmModule:       s (.) s with s = sum over the concatenation [v, u] of
//                   weights [d, x]; the full double sum including a == b.
enum class GroupOperator : uint8_t { kElementProduct, kFmModule };

std::string_view to_string(GroupOperator op);
GroupOperator parse_group_operator(std::string_view name);

// Core operators on explicit vectors. `group_vecs` is N x dim, `user_vecs` is
// K x dim, both row-major.
std::vector<double> group_repr_ep(std::span<const double> dbar, std::span<const double> group_vecs,
                                  std::span<const double> x_u, std::span<const double> user_vecs,
                                  int32_t dim);
std::vector<double> group_repr_fm(std::span<const double> dbar, std::span<const double> group_vecs,
                                  std::span<const double> x_u, std::span<const double> user_vecs,
                                  int32_t dim);
std::vector<double> group_repr(GroupOperator op, std::span<const double> dbar,
                               std::span<const double> group_vecs, std::span<const double> x_u,
                               std::span<const double> user_vecs, int32_t dim);

// Chain rule through group_repr given dL/dM.
struct GroupReprGrad {
  std::vector<double> group_vecs;  // N x dim
  std::vector<double> user_vecs;   // K x dim
};

GroupReprGrad group_repr_backward(GroupOperator op, std::span<const double> dbar,
                                  std::span<const double> group_vecs,
                                  std::span<const double> x_u,
                                  std::span<const double> user_vecs, int32_t dim,
                                  std::span<const double> grad_m);

struct Backdoor {
  GroupOperator op = GroupOperator::kFmModule;
  std::vector<double> dbar;  // frozen expectation of D
  std::vector<double> v;     // N x dim group embeddings

  int32_t num_groups() const { return static_cast<int32_t>(dbar.size()); }
};

// A conventional backbone, or a deconfounded one when `backdoor` is set.
struct Model {
  Backbone backbone = Backbone::kFm;
  FmParams params;
  std::optional<Backdoor> backdoor;
};

// Group embeddings drawn like feature embeddings.
Backdoor make_backdoor(GroupOperator op, std::vector<double> dbar, int32_t dim, uint64_t seed,
                       double init_std = 0.01);

// M(d-bar, u) for the instance's user part; empty when the model has no backdoor.
std::vector<double> group_representation(const Model& model, std::span<const Feature> user);

// f(u, i, M(d-bar, u)): the backbone with M appended as an interaction vector.
double decrs_score(const Model& model, const SparseInstance& instance);

struct ModelGradients {
  Gradients core;          // includes the M path folded into user rows
  std::vector<double> v;   // N x dim, empty without a backdoor
};

ModelGradients model_backward(const Model& model, const SparseInstance& instance, int label,
                              std::span<const double> dropout_mask = {});

}  // namespace decrs
