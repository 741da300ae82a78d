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

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "decrs/fm.hpp"

namespace decrs {

// One (user, item, rating, timestamp) event. `label` is set by binarize().
struct Interaction {
  int32_t user = 0;
  int32_t item = 0;
  double rating = 0.0;
  int64_t timestamp = 0;
  int8_t label = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Interactions over dense user/item indices, plus the index -> raw id maps.
struct InteractionSet {
  std::vector<Interaction> rows;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;

  int32_t num_users() const { return static_cast<int32_t>(user_ids.size()); }
  int32_t num_items() const { return static_cast<int32_t>(item_ids.size()); }
  size_t size() const { return rows.size(); }
};

// Delimiter "" means detect per line: "::", tab, then comma.
struct DelimitedFormat {
  std::string delimiter;
  bool header = false;
};

InteractionSet parse_interactions(std::istream& in, const DelimitedFormat& format,
                                  std::string_view source_name);
InteractionSet load_interactions(const std::filesystem::path& path,
                                 const DelimitedFormat& format);
void write_interactions(const std::filesystem::path& path, const InteractionSet& set);

// Iteratively drops users and items with fewer than k interactions until a
// fixed point. Surviving ids are re-indexed densely, preserving their order.
InteractionSet apply_k_core(const InteractionSet& set, int k);

// label := rating >= threshold.
InteractionSet binarize(const InteractionSet& set, double threshold);

struct DatasetSplit {
  int32_t num_users = 0;
  int32_t num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
  // Per user: training positives in time order (H_u).
  std::vector<std::vector<int32_t>> history;
  // Per user: sorted, unique items with any training interaction.
  std::vector<std::vector<int32_t>> seen;

  bool interacted(int32_t user, int32_t item) const;
};

// Assembles a split from already-partitioned rows; rows of each part must be in
// chronological order.
DatasetSplit make_split(int32_t num_users, int32_t num_items, std::vector<Interaction> train,
                        std::vector<Interaction> valid, std::vector<Interaction> test);

// Global timestamp sort (ties by user, then item); floor(r0*n) rows to train,
// floor(r1*n) to validation, the remainder to test.
DatasetSplit chronological_split(const InteractionSet& set,
                                 std::array<double, 3> ratios = {0.8, 0.1, 0.1});

struct TrainingInstance {
  int32_t user = 0;
  int32_t item = 0;
  int8_t label = 0;

  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

// Each training positive followed by `ratio` uniformly drawn items the user has
// no training interaction with.
std::vector<TrainingInstance> sample_negatives(const DatasetSplit& split, int ratio,
                                               uint64_t seed);

// Item -> group probabilities q^i, item-major.
class GroupTable {
 public:
  GroupTable() = default;
  GroupTable(std::vector<std::string> names, int32_t num_items, std::vector<double> q);

  int32_t num_groups() const { return static_cast<int32_t>(names_.size()); }
  int32_t num_items() const { return num_items_; }
  const std::vector<std::string>& names() const { return names_; }
  std::span<const double> q(int32_t item) const {
    return {q_.data() + static_cast<size_t>(item) * names_.size(), names_.size()};
  }
  const std::vector<double>& values() const { return q_; }

 private:
  std::vector<std::string> names_;
  int32_t num_items_ = 0;
  std::vector<double> q_;
};

using ItemTags = std::vector<std::vector<std::string>>;

// q^i uniform over each item's tags. Tags outside `groups` and untagged items
// are schema errors.
GroupTable group_membership(const ItemTags& tags, const std::vector<std::string>& groups);
// Vocabulary is the sorted set of all tags.
GroupTable group_membership(const ItemTags& tags);

// "item_id<delim>tag|tag|..." per line.
std::unordered_map<std::string, std::vector<std::string>> load_item_metadata(
    const std::filesystem::path& path, const DelimitedFormat& format);
void write_item_metadata(const std::filesystem::path& path,
                         const std::vector<std::string>& item_ids, const ItemTags& tags);
// Tags for every item of `set`, in dense index order.
ItemTags align_item_tags(const InteractionSet& set,
                         const std::unordered_map<std::string, std::vector<std::string>>& meta);

enum class Entity : uint8_t { kUser, kItem };
enum class FieldKind : uint8_t { kUserId, kUserAttribute, kItemId, kItemGroup };

struct FeatureField {
  std::string name;
  Entity entity = Entity::kUser;
  FieldKind kind = FieldKind::kUserId;
  bool group_typed = false;
  int32_t offset = 0;
  int32_t size = 0;
};

struct FeatureSchema {
  std::vector<FeatureField> fields;

  int32_t num_features() const;
  int num_fields(Entity entity) const;
  const FeatureField* find(FieldKind kind) const;
};

// Fields: user ID, optional user attributes, item ID, item group.
FeatureSchema make_schema(int32_t num_users, int32_t num_items, int32_t num_groups,
                          int32_t num_user_attributes = 0);
// Removes group-typed item fields and re-packs offsets (Unawareness baseline).
FeatureSchema drop_group_features(const FeatureSchema& schema);

// Per-user categorical attributes (gender, age bucket, ...), value 1 each.
struct UserAttributes {
  std::vector<std::string> names;
  std::vector<std::vector<int32_t>> per_user;
};

// Turns (user, item) pairs into sparse instances under a schema. Item group
// features carry q^i as their values.
class FeatureEncoder {
 public:
  FeatureEncoder(FeatureSchema schema, GroupTable groups, UserAttributes attributes = {});

  const FeatureSchema& schema() const { return schema_; }
  const GroupTable& groups() const { return groups_; }
  int32_t num_users() const { return num_users_; }
  int32_t num_items() const { return num_items_; }

  const std::vector<Feature>& user_features(int32_t user) const { return users_[user]; }
  const std::vector<Feature>& item_features(int32_t item) const { return items_[item]; }
  SparseInstance encode(int32_t user, int32_t item) const;

 private:
  FeatureSchema schema_;
  GroupTable groups_;
  int32_t num_users_ = 0;
  int32_t num_items_ = 0;
  std::vector<std::vector<Feature>> users_;
  std::vector<std::vector<Feature>> items_;
};

struct SyntheticConfig {
  int32_t num_users = 500;
  int32_t num_items = 200;
  int32_t num_groups = 2;
  std::vector<double> train_preference = {0.7, 0.3};
  std::vector<double> test_preference = {0.5, 0.5};
  // Share of users whose preference moves to test_preference.
  double drift_fraction = 0.5;
  int32_t interactions_per_user = 50;
  // Share of each user's sequence falling in the training period.
  double train_share = 0.8;
  // Drifting users' second half of the training period draws from
  // (1 - ramp) * train + ramp * test, so the shift is visible in history.
  double ramp = 0.5;
  // Log-normal item popularity within a group; 0 = uniform.
  double quality_sigma = 0.5;
  double rating = 5.0;
  uint64_t seed = 1;
};

struct SyntheticDataset {
  InteractionSet interactions;
  ItemTags item_tags;
  std::vector<std::string> group_names;
  std::vector<bool> drifting;
};

// Users click groups by their period preference, then items within the group by
// popularity, without repeats. Timestamps are position * num_users + user, so
// every user's k-th click precedes every (k+1)-th click.
SyntheticDataset synthesize_dataset(const SyntheticConfig& config);

}  // namespace decrs
