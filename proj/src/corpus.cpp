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

#include "decrs/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "decrs/error.hpp"

namespace decrs {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string detect_delimiter(std::string_view line, const DelimitedFormat& format) {
  if (!format.delimiter.empty()) return format.delimiter;
  if (line.find("::") != std::string_view::npos) return "::";
  if (line.find('\t') != std::string_view::npos) return "\t";
  return ",";
}

std::vector<std::string_view> split(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + delim.size();
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::ifstream open_input(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(fmt::format("input file not found: {}", path.string()));
  }
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  return in;
}

// Dense re-indexing of the ids kept by `keep`, preserving order.
std::vector<int32_t> compact(const std::vector<bool>& keep) {
  std::vector<int32_t> remap(keep.size(), -1);
  int32_t next = 0;
  for (size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) remap[i] = next++;
  }
  return remap;
}

}  // namespace

InteractionSet parse_interactions(std::istream& in, const DelimitedFormat& format,
                                  std::string_view source_name) {
  InteractionSet set;
  std::unordered_map<std::string, int32_t> users, items;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (format.header && line_no == 1) continue;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto cols = split(view, detect_delimiter(view, format));
    Interaction row;
    if (cols.size() != 4 || cols[0].empty() || cols[1].empty() ||
        !parse_number(cols[2], row.rating) || !parse_number(cols[3], row.timestamp)) {
      throw ParseError(fmt::format("{}:{}: malformed row '{}' (expected user, item, rating, "
                                   "timestamp)",
                                   source_name, line_no, view));
    }
    auto intern = [](std::unordered_map<std::string, int32_t>& map,
                     std::vector<std::string>& ids, std::string_view key) {
      auto [it, inserted] = map.try_emplace(std::string(key), static_cast<int32_t>(ids.size()));
      if (inserted) ids.emplace_back(key);
      return it->second;
    };
    row.user = intern(users, set.user_ids, cols[0]);
    row.item = intern(items, set.item_ids, cols[1]);
    set.rows.push_back(row);
  }
  if (set.rows.empty()) {
    throw DataError(fmt::format("{}: empty dataset", source_name));
  }
  return set;
}

InteractionSet load_interactions(const std::filesystem::path& path,
                                 const DelimitedFormat& format) {
  auto in = open_input(path);
  return parse_interactions(in, format, path.string());
}

void write_interactions(const std::filesystem::path& path, const InteractionSet& set) {
  auto out = fmt::output_file(path.string());
  for (const Interaction& r : set.rows) {
    out.print("{}\t{}\t{}\t{}\n", set.user_ids[r.user], set.item_ids[r.item], r.rating,
              r.timestamp);
  }
}

InteractionSet apply_k_core(const InteractionSet& set, int k) {
  if (k < 1) throw std::invalid_argument("apply_k_core: k must be >= 1");
  std::vector<bool> alive(set.rows.size(), true);
  std::vector<int64_t> user_count(set.num_users()), item_count(set.num_items());
  for (const auto& r : set.rows) {
    ++user_count[r.user];
    ++item_count[r.item];
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < set.rows.size(); ++i) {
      if (!alive[i]) continue;
      const auto& r = set.rows[i];
      if (user_count[r.user] < k || item_count[r.item] < k) {
        alive[i] = false;
        --user_count[r.user];
        --item_count[r.item];
        changed = true;
      }
    }
  }
  std::vector<bool> keep_user(set.num_users()), keep_item(set.num_items());
  for (int32_t u = 0; u < set.num_users(); ++u) keep_user[u] = user_count[u] > 0;
  for (int32_t i = 0; i < set.num_items(); ++i) keep_item[i] = item_count[i] > 0;
  const auto user_map = compact(keep_user);
  const auto item_map = compact(keep_item);

  InteractionSet out;
  for (int32_t u = 0; u < set.num_users(); ++u) {
    if (keep_user[u]) out.user_ids.push_back(set.user_ids[u]);
  }
  for (int32_t i = 0; i < set.num_items(); ++i) {
    if (keep_item[i]) out.item_ids.push_back(set.item_ids[i]);
  }
  for (size_t i = 0; i < set.rows.size(); ++i) {
    if (!alive[i]) continue;
    Interaction r = set.rows[i];
    r.user = user_map[r.user];
    r.item = item_map[r.item];
    out.rows.push_back(r);
  }
  return out;
}

InteractionSet binarize(const InteractionSet& set, double threshold) {
  InteractionSet out = set;
  for (auto& r : out.rows) r.label = r.rating >= threshold ? 1 : 0;
  return out;
}

bool DatasetSplit::interacted(int32_t user, int32_t item) const {
  const auto& s = seen[user];
  return std::binary_search(s.begin(), s.end(), item);
}

DatasetSplit make_split(int32_t num_users, int32_t num_items, std::vector<Interaction> train,
                        std::vector<Interaction> valid, std::vector<Interaction> test) {
  DatasetSplit split;
  split.num_users = num_users;
  split.num_items = num_items;
  split.history.resize(num_users);
  split.seen.resize(num_users);
  for (const auto& r : train) {
    if (r.label) split.history[r.user].push_back(r.item);
    split.seen[r.user].push_back(r.item);
  }
  for (auto& s : split.seen) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  split.train = std::move(train);
  split.valid = std::move(valid);
  split.test = std::move(test);
  return split;
}

DatasetSplit chronological_split(const InteractionSet& set, std::array<double, 3> ratios) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("chronological_split: ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("chronological_split: ratios must sum to 1");
  }
  const size_t n = set.rows.size();
  if (n < 3) {
    throw DataError(fmt::format("chronological_split: need at least 3 interactions, got {}", n));
  }
  std::vector<Interaction> rows = set.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    if (a.user != b.user) return a.user < b.user;
    return a.item < b.item;
  });
  const auto n_train = static_cast<size_t>(std::floor(ratios[0] * n + 1e-9));
  const auto n_valid = static_cast<size_t>(std::floor(ratios[1] * n + 1e-9));
  std::vector<Interaction> train(rows.begin(), rows.begin() + n_train);
  std::vector<Interaction> valid(rows.begin() + n_train, rows.begin() + n_train + n_valid);
  std::vector<Interaction> test(rows.begin() + n_train + n_valid, rows.end());
  return make_split(set.num_users(), set.num_items(), std::move(train), std::move(valid),
                    std::move(test));
}

std::vector<TrainingInstance> sample_negatives(const DatasetSplit& split, int ratio,
                                               uint64_t seed) {
  if (ratio < 1) throw std::invalid_argument("sample_negatives: ratio must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int32_t> pick(0, split.num_items - 1);
  std::vector<TrainingInstance> out;
  for (const auto& r : split.train) {
    if (!r.label) continue;
    if (static_cast<int32_t>(split.seen[r.user].size()) >= split.num_items) {
      throw DataError(
          fmt::format("sample_negatives: user {} interacted with every item", r.user));
    }
    out.push_back({r.user, r.item, 1});
    for (int j = 0; j < ratio; ++j) {
      int32_t item;
      do {
        item = pick(rng);
      } while (split.interacted(r.user, item));
      out.push_back({r.user, item, 0});
    }
  }
  return out;
}

GroupTable::GroupTable(std::vector<std::string> names, int32_t num_items, std::vector<double> q)
    : names_(std::move(names)), num_items_(num_items), q_(std::move(q)) {
  if (q_.size() != static_cast<size_t>(num_items_) * names_.size()) {
    throw std::invalid_argument("GroupTable: membership matrix has the wrong size");
  }
}

GroupTable group_membership(const ItemTags& tags, const std::vector<std::string>& groups) {
  std::unordered_map<std::string, int32_t> index;
  for (size_t g = 0; g < groups.size(); ++g) index.emplace(groups[g], static_cast<int32_t>(g));
  const size_t n = groups.size();
  std::vector<double> q(tags.size() * n, 0.0);
  for (size_t i = 0; i < tags.size(); ++i) {
    std::set<int32_t> hit;
    for (const auto& t : tags[i]) {
      auto it = index.find(t);
      if (it == index.end()) {
        throw ConfigError(fmt::format("item {}: unknown group tag '{}'", i, t));
      }
      hit.insert(it->second);
    }
    if (hit.empty()) throw ConfigError(fmt::format("item {} has no group tag", i));
    const double share = 1.0 / static_cast<double>(hit.size());
    for (int32_t g : hit) q[i * n + g] = share;
  }
  return GroupTable(groups, static_cast<int32_t>(tags.size()), std::move(q));
}

GroupTable group_membership(const ItemTags& tags) {
  std::set<std::string> vocab;
  for (const auto& t : tags) vocab.insert(t.begin(), t.end());
  return group_membership(tags, std::vector<std::string>(vocab.begin(), vocab.end()));
}

std::unordered_map<std::string, std::vector<std::string>> load_item_metadata(
    const std::filesystem::path& path, const DelimitedFormat& format) {
  auto in = open_input(path);
  std::unordered_map<std::string, std::vector<std::string>> meta;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (format.header && line_no == 1) continue;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto cols = split(view, detect_delimiter(view, format));
    if (cols.size() < 2 || cols.front().empty()) {
      throw ParseError(fmt::format("{}:{}: expected item id and group tags", path.string(),
                                   line_no));
    }
    // The tag list is the last column ("id, title, tags" layouts also work).
    std::vector<std::string> tags;
    for (auto t : split(cols.back(), "|")) {
      if (!t.empty()) tags.emplace_back(t);
    }
    meta[std::string(cols.front())] = std::move(tags);
  }
  return meta;
}

void write_item_metadata(const std::filesystem::path& path,
                         const std::vector<std::string>& item_ids, const ItemTags& tags) {
  auto out = fmt::output_file(path.string());
  for (size_t i = 0; i < item_ids.size(); ++i) {
    out.print("{}\t{}\n", item_ids[i], fmt::join(tags[i], "|"));
  }
}

ItemTags align_item_tags(const InteractionSet& set,
                         const std::unordered_map<std::string, std::vector<std::string>>& meta) {
  ItemTags out;
  out.reserve(set.item_ids.size());
  for (const auto& id : set.item_ids) {
    auto it = meta.find(id);
    if (it == meta.end()) throw ConfigError(fmt::format("item '{}' missing from metadata", id));
    out.push_back(it->second);
  }
  return out;
}

int32_t FeatureSchema::num_features() const {
  int32_t n = 0;
  for (const auto& f : fields) n = std::max(n, f.offset + f.size);
  return n;
}

int FeatureSchema::num_fields(Entity entity) const {
  return static_cast<int>(std::count_if(fields.begin(), fields.end(),
                                        [&](const FeatureField& f) { return f.entity == entity; }));
}

const FeatureField* FeatureSchema::find(FieldKind kind) const {
  for (const auto& f : fields) {
    if (f.kind == kind) return &f;
  }
  return nullptr;
}

FeatureSchema make_schema(int32_t num_users, int32_t num_items, int32_t num_groups,
                          int32_t num_user_attributes) {
  FeatureSchema s;
  int32_t offset = 0;
  auto add = [&](std::string name, Entity entity, FieldKind kind, bool group, int32_t size) {
    s.fields.push_back({std::move(name), entity, kind, group, offset, size});
    offset += size;
  };
  add("user_id", Entity::kUser, FieldKind::kUserId, false, num_users);
  if (num_user_attributes > 0) {
    add("user_attr", Entity::kUser, FieldKind::kUserAttribute, false, num_user_attributes);
  }
  add("item_id", Entity::kItem, FieldKind::kItemId, false, num_items);
  if (num_groups > 0) add("item_group", Entity::kItem, FieldKind::kItemGroup, true, num_groups);
  return s;
}

FeatureSchema drop_group_features(const FeatureSchema& schema) {
  FeatureSchema out;
  int32_t offset = 0;
  for (const auto& f : schema.fields) {
    if (f.entity == Entity::kItem && f.group_typed) continue;
    FeatureField copy = f;
    copy.offset = offset;
    offset += f.size;
    out.fields.push_back(std::move(copy));
  }
  return out;
}

FeatureEncoder::FeatureEncoder(FeatureSchema schema, GroupTable groups,
                               UserAttributes attributes)
    : schema_(std::move(schema)), groups_(std::move(groups)) {
  const FeatureField* uid = schema_.find(FieldKind::kUserId);
  const FeatureField* iid = schema_.find(FieldKind::kItemId);
  if (!uid || !iid) throw std::invalid_argument("FeatureEncoder: schema needs user and item ids");
  num_users_ = uid->size;
  num_items_ = iid->size;
  const FeatureField* attr = schema_.find(FieldKind::kUserAttribute);
  const FeatureField* group = schema_.find(FieldKind::kItemGroup);

  users_.resize(num_users_);
  for (int32_t u = 0; u < num_users_; ++u) {
    users_[u].push_back({uid->offset + u, 1.0});
    if (attr && u < static_cast<int32_t>(attributes.per_user.size())) {
      for (int32_t a : attributes.per_user[u]) {
        if (a < 0 || a >= attr->size) throw std::out_of_range("user attribute out of schema");
        users_[u].push_back({attr->offset + a, 1.0});
      }
    }
  }
  if (group && groups_.num_items() != num_items_) {
    throw std::invalid_argument("FeatureEncoder: group table does not cover every item");
  }
  items_.resize(num_items_);
  for (int32_t i = 0; i < num_items_; ++i) {
    items_[i].push_back({iid->offset + i, 1.0});
    if (!group) continue;
    const auto q = groups_.q(i);
    for (int32_t n = 0; n < group->size; ++n) {
      if (q[n] > 0.0) items_[i].push_back({group->offset + n, q[n]});
    }
  }
}

SparseInstance FeatureEncoder::encode(int32_t user, int32_t item) const {
  return {users_.at(user), items_.at(item)};
}

SyntheticDataset synthesize_dataset(const SyntheticConfig& c) {
  if (c.num_users <= 0 || c.num_items <= 0 || c.num_groups <= 0 ||
      c.interactions_per_user <= 0) {
    throw ConfigError("synthetic: counts must be positive");
  }
  if (c.num_items < c.num_groups) {
    throw ConfigError(fmt::format("synthetic: {} items leave a group of {} empty", c.num_items,
                                  c.num_groups));
  }
  if (c.interactions_per_user > c.num_items) {
    throw ConfigError("synthetic: more interactions per user than items");
  }
  for (const auto* pref : {&c.train_preference, &c.test_preference}) {
    if (static_cast<int32_t>(pref->size()) != c.num_groups) {
      throw ConfigError("synthetic: preference length must equal the group count");
    }
    double total = 0.0;
    for (double p : *pref) {
      if (p < 0.0) throw ConfigError("synthetic: negative preference");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("synthetic: preference must sum to 1");
  }
  if (c.drift_fraction < 0.0 || c.drift_fraction > 1.0 || c.ramp < 0.0 || c.ramp > 1.0 ||
      c.train_share <= 0.0 || c.train_share > 1.0 || c.quality_sigma < 0.0) {
    throw ConfigError("synthetic: drift_fraction, ramp and train_share must lie in [0, 1]");
  }

  std::mt19937_64 rng(c.seed);
  const int32_t n_groups = c.num_groups;
  std::vector<std::vector<int32_t>> group_items(n_groups);
  for (int32_t i = 0; i < c.num_items; ++i) group_items[i % n_groups].push_back(i);
  std::vector<double> popularity(c.num_items, 1.0);
  if (c.quality_sigma > 0.0) {
    std::lognormal_distribution<double> quality(0.0, c.quality_sigma);
    for (double& w : popularity) w = quality(rng);
  }

  std::vector<int32_t> order(c.num_users);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_drift = static_cast<int32_t>(std::lround(c.drift_fraction * c.num_users));
  std::vector<bool> drifting(c.num_users, false);
  for (int32_t j = 0; j < n_drift; ++j) drifting[order[j]] = true;

  std::vector<double> ramped(n_groups);
  for (int32_t g = 0; g < n_groups; ++g) {
    ramped[g] = (1.0 - c.ramp) * c.train_preference[g] + c.ramp * c.test_preference[g];
  }

  const int32_t n = c.interactions_per_user;
  const auto n_train = static_cast<int32_t>(std::lround(c.train_share * n));
  SyntheticDataset out;
  for (int32_t u = 0; u < c.num_users; ++u) out.interactions.user_ids.push_back(std::to_string(u));
  for (int32_t i = 0; i < c.num_items; ++i) out.interactions.item_ids.push_back(std::to_string(i));
  for (int32_t g = 0; g < n_groups; ++g) out.group_names.push_back(fmt::format("g{}", g));
  out.item_tags.resize(c.num_items);
  for (int32_t i = 0; i < c.num_items; ++i) out.item_tags[i] = {out.group_names[i % n_groups]};
  out.drifting = drifting;

  // Clicks are generated position-major so each user consumes the RNG in the
  // same pattern regardless of the other users' outcomes.
  std::vector<std::vector<bool>> taken(c.num_users, std::vector<bool>(c.num_items, false));
  std::vector<std::vector<int32_t>> remaining(c.num_users, std::vector<int32_t>(n_groups));
  for (auto& r : remaining) {
    for (int32_t g = 0; g < n_groups; ++g) r[g] = static_cast<int32_t>(group_items[g].size());
  }
  out.interactions.rows.reserve(static_cast<size_t>(c.num_users) * n);
  std::vector<double> weights(n_groups);
  for (int32_t k = 0; k < n; ++k) {
    for (int32_t u = 0; u < c.num_users; ++u) {
      const std::vector<double>* pref = &c.train_preference;
      if (drifting[u]) {
        if (k >= n_train) {
          pref = &c.test_preference;
        } else if (k >= n_train / 2) {
          pref = &ramped;
        }
      }
      double total = 0.0;
      for (int32_t g = 0; g < n_groups; ++g) {
        weights[g] = remaining[u][g] > 0 ? (*pref)[g] : 0.0;
        total += weights[g];
      }
      if (total <= 0.0) {
        throw DataError(fmt::format(
            "synthetic: user {} exhausted every group its preference allows", u));
      }
      std::discrete_distribution<int32_t> pick_group(weights.begin(), weights.end());
      const int32_t g = pick_group(rng);
      std::vector<double> item_w(group_items[g].size());
      for (size_t j = 0; j < item_w.size(); ++j) {
        const int32_t item = group_items[g][j];
        item_w[j] = taken[u][item] ? 0.0 : popularity[item];
      }
      std::discrete_distribution<size_t> pick_item(item_w.begin(), item_w.end());
      const int32_t item = group_items[g][pick_item(rng)];
      taken[u][item] = true;
      --remaining[u][g];
      out.interactions.rows.push_back(
          {u, item, c.rating, static_cast<int64_t>(k) * c.num_users + u, 0});
    }
  }
  return out;
}

}  // namespace decrs
