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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "decrs/corpus.hpp"
#include "decrs/error.hpp"

namespace decrs {
namespace {

InteractionSet parse(const std::string& text, DelimitedFormat format = {}) {
  std::istringstream in(text);
  return parse_interactions(in, format, "mem");
}

// Users u0..u(n-1) and items i0..; `edges` lists (user, item) pairs.
InteractionSet from_edges(int users, int items, const std::vector<std::pair<int, int>>& edges) {
  InteractionSet set;
  for (int u = 0; u < users; ++u) set.user_ids.push_back("u" + std::to_string(u));
  for (int i = 0; i < items; ++i) set.item_ids.push_back("i" + std::to_string(i));
  int64_t t = 0;
  for (auto [u, i] : edges) set.rows.push_back({u, i, 5.0, t++, 0});
  return set;
}

TEST_CASE("parses three rows with each delimiter") {
  for (const std::string& text : {std::string("1::10::5::100\n1::11::3::101\n2::10::4::102\n"),
                                  std::string("1\t10\t5\t100\n1\t11\t3\t101\n2\t10\t4\t102\n"),
                                  std::string("1,10,5,100\n1,11,3,101\n2,10,4,102\n")}) {
    const InteractionSet set = parse(text);
    REQUIRE(set.size() == 3);
    CHECK(set.num_users() == 2);
    CHECK(set.num_items() == 2);
    CHECK(set.user_ids[set.rows[2].user] == "2");
    CHECK(set.item_ids[set.rows[1].item] == "11");
    CHECK(set.rows[1].rating == 3.0);
    CHECK(set.rows[2].timestamp == 102);
  }
}

TEST_CASE("header line is skipped only when flagged") {
  DelimitedFormat format{",", true};
  CHECK(parse("user,item,rating,ts\n1,2,5,9\n", format).size() == 1);
  CHECK_THROWS_AS(parse("user,item,rating,ts\n1,2,5,9\n", {",", false}), ParseError);
}

TEST_CASE("malformed row names its line") {
  try {
    parse("1,10,5,100\n1,11,x,101\n2,10,4,102\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("mem:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("1,10,5\n"), ParseError);
  CHECK_THROWS_AS(parse("1,10,5,100,7\n"), ParseError);
}

TEST_CASE("empty input and missing file") {
  CHECK_THROWS_AS(parse("\n\n"), DataError);
  CHECK_THROWS_AS(load_interactions("/nonexistent/ratings.dat", {}), ConfigError);
}

TEST_CASE("write then load round-trips") {
  const auto path = std::filesystem::temp_directory_path() / "decrs_corpus_roundtrip.tsv";
  const InteractionSet set = parse("a,x,5,1\nb,y,3.5,2\na,y,4,3\n");
  write_interactions(path, set);
  const InteractionSet back = load_interactions(path, {});
  CHECK(back.rows == set.rows);
  CHECK(back.user_ids == set.user_ids);
  CHECK(back.item_ids == set.item_ids);
  std::filesystem::remove(path);
}

TEST_CASE("k-core keeps a set that already satisfies k") {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < 3; ++i) edges.emplace_back(u, i);
  }
  const InteractionSet set = from_edges(3, 3, edges);
  const InteractionSet out = apply_k_core(set, 3);
  CHECK(out.rows == set.rows);
  CHECK(out.user_ids == set.user_ids);
}

TEST_CASE("k-core drops a lone sparse user") {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < 3; ++i) edges.emplace_back(u, i);
  }
  edges.emplace_back(3, 0);
  edges.emplace_back(3, 1);
  const InteractionSet out = apply_k_core(from_edges(4, 3, edges), 3);
  CHECK(out.num_users() == 3);
  CHECK(std::find(out.user_ids.begin(), out.user_ids.end(), "u3") == out.user_ids.end());
  CHECK(out.size() == 9);
}

TEST_CASE("k-core peels a chain on a 5x5 graph") {
  // k = 2. u0..u2 and i0..i2 form a dense block. u3 clicks i2 and i3; u4
  // clicks i3 and i4. i4 has only u4, so it goes first; u4 then has one
  // click and goes; i3 is left with u3 only and goes; u3 then has one click
  // (i2) and goes. The block survives.
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < 3; ++i) edges.emplace_back(u, i);
  }
  edges.insert(edges.end(), {{3, 2}, {3, 3}, {4, 3}, {4, 4}});
  const InteractionSet out = apply_k_core(from_edges(5, 5, edges), 2);
  CHECK(out.user_ids == std::vector<std::string>{"u0", "u1", "u2"});
  CHECK(out.item_ids == std::vector<std::string>{"i0", "i1", "i2"});
  CHECK(out.size() == 9);
  // Fixed point.
  const InteractionSet again = apply_k_core(out, 2);
  CHECK(again.rows == out.rows);
  CHECK_THROWS_AS(apply_k_core(out, 0), std::invalid_argument);
}

TEST_CASE("k-core output is a fixed point on random graphs") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<int, int>> edges;
    for (int e = 0; e < 120; ++e) edges.emplace_back(rng() % 20, rng() % 25);
    const InteractionSet out = apply_k_core(from_edges(20, 25, edges), 4);
    const InteractionSet again = apply_k_core(out, 4);
    CHECK(again.rows == out.rows);
    std::vector<int> uc(out.num_users()), ic(out.num_items());
    for (const auto& r : out.rows) {
      ++uc[r.user];
      ++ic[r.item];
    }
    for (int c : uc) CHECK(c >= 4);
    for (int c : ic) CHECK(c >= 4);
  }
}

TEST_CASE("binarize threshold boundaries") {
  const InteractionSet set = parse("1,1,4,1\n1,2,3.9,2\n1,3,5,3\n1,4,1,4\n");
  const InteractionSet b = binarize(set, 4.0);
  CHECK(b.rows[0].label == 1);
  CHECK(b.rows[1].label == 0);
  CHECK(b.rows[2].label == 1);
  CHECK(b.rows[3].label == 0);
  for (const auto& r : binarize(set, 1.0).rows) CHECK(r.label == 1);
}

TEST_CASE("chronological split of ten rows is 8/1/1") {
  std::vector<std::pair<int, int>> edges;
  for (int e = 0; e < 10; ++e) edges.emplace_back(e % 3, e);
  const DatasetSplit split = chronological_split(binarize(from_edges(3, 10, edges), 4));
  CHECK(split.train.size() == 8);
  CHECK(split.valid.size() == 1);
  CHECK(split.test.size() == 1);
  CHECK(split.test[0].item == 9);
  CHECK(split.history[0] == std::vector<int32_t>{0, 3, 6});
  CHECK_THROWS_AS(chronological_split(from_edges(1, 2, {{0, 0}, {0, 1}})), DataError);
}

TEST_CASE("split sizes for a 575,276-row corpus") {
  InteractionSet set;
  set.user_ids = {"u"};
  for (int i = 0; i < 1000; ++i) set.item_ids.push_back(std::to_string(i));
  set.rows.resize(575276);
  for (size_t r = 0; r < set.rows.size(); ++r) {
    set.rows[r] = {0, static_cast<int32_t>(r % 1000), 5.0, static_cast<int64_t>(r), 1};
  }
  const DatasetSplit split = chronological_split(set);
  CHECK(split.train.size() == 460220);
  CHECK(split.valid.size() == 57527);
  CHECK(split.test.size() == 57529);
}

TEST_CASE("split with tied timestamps is deterministic and chronological") {
  std::mt19937_64 rng(4);
  InteractionSet set;
  for (int u = 0; u < 6; ++u) set.user_ids.push_back(std::to_string(u));
  for (int i = 0; i < 30; ++i) set.item_ids.push_back(std::to_string(i));
  for (int e = 0; e < 200; ++e) {
    set.rows.push_back({static_cast<int32_t>(rng() % 6), static_cast<int32_t>(rng() % 30),
                        static_cast<double>(1 + rng() % 5), static_cast<int64_t>(rng() % 7), 0});
  }
  set = binarize(set, 4);
  const DatasetSplit a = chronological_split(set);
  const DatasetSplit b = chronological_split(set);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  CHECK(a.test == b.test);
  CHECK(a.train.size() + a.valid.size() + a.test.size() == set.size());
  for (const auto& t : a.train) {
    for (const auto& v : a.valid) CHECK(t.timestamp <= v.timestamp);
  }
  for (const auto& v : a.valid) {
    for (const auto& t : a.test) CHECK(v.timestamp <= t.timestamp);
  }
  // Labeling is row-local, so it commutes with splitting.
  InteractionSet raw = set;
  for (auto& r : raw.rows) r.label = 0;
  const DatasetSplit c = chronological_split(raw);
  for (size_t r = 0; r < c.train.size(); ++r) {
    CHECK((c.train[r].rating >= 4) == (a.train[r].label == 1));
  }
}

TEST_CASE("negatives: counts, exclusions, determinism") {
  const InteractionSet set =
      binarize(from_edges(2, 6, {{0, 0}, {1, 1}, {0, 2}, {1, 3}, {0, 4}, {1, 5}, {0, 5}}), 4);
  std::array<double, 3> ratios = {0.3, 0.3, 0.4};
  const DatasetSplit split = chronological_split(set, ratios);
  REQUIRE(split.train.size() == 2);
  const auto inst = sample_negatives(split, 1, 7);
  CHECK(inst.size() == 4);
  CHECK(inst[0].label == 1);
  CHECK(inst[1].label == 0);
  CHECK(sample_negatives(split, 1, 7) == inst);
  for (const auto& t : inst) {
    if (t.label == 0) CHECK(!split.interacted(t.user, t.item));
  }
  CHECK(sample_negatives(split, 3, 1).size() == 8);
  CHECK_THROWS_AS(sample_negatives(split, 0, 1), std::invalid_argument);
}

TEST_CASE("negatives: the only unseen item is always drawn") {
  std::vector<std::pair<int, int>> edges = {{0, 0}, {0, 1}, {0, 2}, {0, 3}};
  InteractionSet set = binarize(from_edges(1, 5, edges), 4);
  const DatasetSplit split = make_split(1, 5, set.rows, {}, {});
  for (uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& t : sample_negatives(split, 2, seed)) {
      if (t.label == 0) CHECK(t.item == 4);
    }
  }
  set.rows.push_back({0, 4, 5.0, 9, 1});
  const DatasetSplit full = make_split(1, 5, set.rows, {}, {});
  CHECK_THROWS_AS(sample_negatives(full, 1, 1), DataError);
}

TEST_CASE("negatives skip items the user rated below threshold") {
  InteractionSet set = from_edges(1, 3, {{0, 0}, {0, 1}});
  set.rows[1].rating = 2.0;
  set = binarize(set, 4);
  const DatasetSplit split = make_split(1, 3, set.rows, {}, {});
  const auto inst = sample_negatives(split, 5, 3);
  CHECK(inst.size() == 6);
  for (const auto& t : inst) {
    if (t.label == 0) CHECK(t.item == 2);
  }
}

TEST_CASE("group membership vectors") {
  const GroupTable one = group_membership({{"g1"}}, {"g1", "g2", "g3"});
  CHECK(std::vector<double>(one.q(0).begin(), one.q(0).end()) ==
        std::vector<double>{1.0, 0.0, 0.0});
  const GroupTable two = group_membership({{"g1", "g2"}}, {"g1", "g2"});
  CHECK(two.q(0)[0] == 0.5);
  CHECK(two.q(0)[1] == 0.5);
  const GroupTable three = group_membership({{"g1", "g2", "g4"}}, {"g1", "g2", "g3", "g4"});
  CHECK(three.q(0)[0] == doctest::Approx(1.0 / 3));
  CHECK(three.q(0)[2] == 0.0);
  CHECK(three.q(0)[3] == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(group_membership({{"g9"}}, {"g1"}), ConfigError);
  CHECK_THROWS_AS(group_membership({{}}, {"g1"}), ConfigError);
  const GroupTable vocab = group_membership({{"b"}, {"a", "b"}});
  CHECK(vocab.names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("group rows are on the simplex for random tag sets") {
  std::mt19937_64 rng(2);
  const std::vector<std::string> groups = {"a", "b", "c", "d", "e"};
  ItemTags tags(200);
  for (auto& t : tags) {
    const int count = 1 + static_cast<int>(rng() % 4);
    for (int c = 0; c < count; ++c) t.push_back(groups[rng() % groups.size()]);
  }
  const GroupTable table = group_membership(tags, groups);
  for (int32_t i = 0; i < table.num_items(); ++i) {
    double total = 0.0;
    for (double q : table.q(i)) {
      CHECK(q >= 0.0);
      total += q;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("item metadata round-trips and aligns") {
  const auto path = std::filesystem::temp_directory_path() / "decrs_items.tsv";
  write_item_metadata(path, {"10", "11"}, {{"Action", "Comedy"}, {"Drama"}});
  const auto meta = load_item_metadata(path, {});
  CHECK(meta.at("10") == std::vector<std::string>{"Action", "Comedy"});
  const InteractionSet set = parse("1,11,5,1\n1,10,5,2\n");
  const ItemTags tags = align_item_tags(set, meta);
  CHECK(tags[0] == std::vector<std::string>{"Drama"});
  const InteractionSet other = parse("1,12,5,1\n");
  CHECK_THROWS_AS(align_item_tags(other, meta), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("ml-1m style movie metadata uses the last column") {
  const auto path = std::filesystem::temp_directory_path() / "decrs_movies.dat";
  {
    std::ofstream out(path);
    out << "1::Toy Story (1995)::Animation|Children's|Comedy\n";
  }
  const auto meta = load_item_metadata(path, {});
  CHECK(meta.at("1").size() == 3);
  std::filesystem::remove(path);
}

TEST_CASE("schema layout and dropping group fields") {
  const FeatureSchema s = make_schema(4, 6, 3, 2);
  CHECK(s.num_features() == 4 + 2 + 6 + 3);
  CHECK(s.num_fields(Entity::kUser) == 2);
  CHECK(s.num_fields(Entity::kItem) == 2);
  const FeatureSchema d = drop_group_features(s);
  CHECK(d.num_fields(Entity::kItem) == 1);
  CHECK(d.num_fields(Entity::kUser) == 2);
  CHECK(d.num_features() == 12);
  CHECK(d.find(FieldKind::kItemGroup) == nullptr);
  const FeatureSchema plain = make_schema(4, 6, 0);
  CHECK(drop_group_features(plain).num_features() == plain.num_features());
}

TEST_CASE("encoder produces unique in-schema ids with q as group values") {
  const GroupTable groups = group_membership({{"a"}, {"a", "b"}, {"b"}}, {"a", "b"});
  UserAttributes attrs{{"F", "M"}, {{0}, {1}}};
  const FeatureEncoder enc(make_schema(2, 3, 2, 2), groups, attrs);
  const SparseInstance inst = enc.encode(1, 1);
  std::set<int32_t> ids;
  for (const auto* side : {&inst.user, &inst.item}) {
    for (const auto& f : *side) {
      CHECK(f.id >= 0);
      CHECK(f.id < enc.schema().num_features());
      ids.insert(f.id);
    }
  }
  CHECK(ids.size() == inst.user.size() + inst.item.size());
  REQUIRE(inst.item.size() == 3);
  CHECK(inst.item[1].value == 0.5);
  CHECK(inst.item[2].value == 0.5);
  const FeatureEncoder bare(drop_group_features(make_schema(2, 3, 2, 2)), groups, attrs);
  CHECK(bare.encode(1, 1).item.size() == 1);
}

TEST_CASE("synthetic generator: shape, no repeats, determinism") {
  SyntheticConfig c;
  c.num_users = 20;
  c.num_items = 40;
  c.interactions_per_user = 10;
  const SyntheticDataset a = synthesize_dataset(c);
  const SyntheticDataset b = synthesize_dataset(c);
  CHECK(a.interactions.rows == b.interactions.rows);
  CHECK(a.interactions.size() == 200);
  CHECK(std::count(a.drifting.begin(), a.drifting.end(), true) == 10);
  std::set<std::pair<int32_t, int32_t>> pairs;
  for (const auto& r : a.interactions.rows) pairs.emplace(r.user, r.item);
  CHECK(pairs.size() == 200);
  CHECK(a.item_tags[3] == std::vector<std::string>{"g1"});
  c.seed = 2;
  CHECK(synthesize_dataset(c).interactions.rows != a.interactions.rows);
}

TEST_CASE("synthetic generator: degenerate preference") {
  SyntheticConfig c;
  c.num_users = 10;
  c.num_items = 100;
  c.train_preference = {1.0, 0.0};
  c.test_preference = {1.0, 0.0};
  c.interactions_per_user = 30;
  const SyntheticDataset ds = synthesize_dataset(c);
  for (const auto& r : ds.interactions.rows) CHECK(r.item % 2 == 0);
}

TEST_CASE("synthetic generator: empirical distribution approaches preference") {
  SyntheticConfig c;
  c.num_users = 1;
  c.num_items = 3000;
  c.interactions_per_user = 1000;
  c.drift_fraction = 0.0;
  c.quality_sigma = 0.0;
  c.train_share = 1.0;
  const SyntheticDataset ds = synthesize_dataset(c);
  const auto g0 = std::count_if(ds.interactions.rows.begin(), ds.interactions.rows.end(),
                                [](const Interaction& r) { return r.item % 2 == 0; });
  CHECK(std::abs(static_cast<double>(g0) / 1000.0 - 0.7) < 0.05);
}

TEST_CASE("synthetic generator: config errors") {
  SyntheticConfig c;
  c.num_items = 1;
  CHECK_THROWS_AS(synthesize_dataset(c), ConfigError);
  c = {};
  c.train_preference = {0.5, 0.4};
  CHECK_THROWS_AS(synthesize_dataset(c), ConfigError);
  c = {};
  c.test_preference = {1.0};
  CHECK_THROWS_AS(synthesize_dataset(c), ConfigError);
}

}  // namespace
}  // namespace decrs
