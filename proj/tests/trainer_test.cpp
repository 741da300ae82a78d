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

#include <cmath>
#include <limits>
#include <vector>

#include "decrs/error.hpp"
#include "decrs/trainer.hpp"

namespace decrs {
namespace {

// Two users with opposite tastes over two items: u0 likes i0, u1 likes i1.
struct Toy {
  DatasetSplit split;
  FeatureEncoder encoder{make_schema(2, 2, 0), GroupTable({}, 2, {})};
};

Toy separable_toy() {
  Toy t;
  std::vector<Interaction> train = {{0, 0, 5.0, 1, 1}, {1, 1, 5.0, 2, 1}};
  t.split = make_split(2, 2, train, {}, {});
  return t;
}

TEST_CASE("separable toy: loss falls and preferences are recovered") {
  const Toy toy = separable_toy();
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 4;
  cfg.lr = 0.05;
  const TrainResult r =
      train(make_model(Backbone::kFm, toy.encoder.schema().num_features(), 8, 1), toy.split,
            toy.encoder, cfg);
  REQUIRE(r.log.size() == 60);
  for (int e = 1; e < 5; ++e) CHECK(r.log[e].loss <= r.log[e - 1].loss + 1e-9);
  CHECK(r.log.back().loss < r.log.front().loss);
  // Held-out repeat of the same preferences, ranked over both items: R@1 = 1.
  const auto s = [&](int u, int i) { return decrs_score(r.model, toy.encoder.encode(u, i)); };
  CHECK(s(0, 0) > s(0, 1));
  CHECK(s(1, 1) > s(1, 0));
}

TEST_CASE("nfm also separates the toy") {
  const Toy toy = separable_toy();
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 4;
  cfg.dropout = 0.0;
  const TrainResult r =
      train(make_model(Backbone::kNfm, toy.encoder.schema().num_features(), 8, 2), toy.split,
            toy.encoder, cfg);
  const auto s = [&](int u, int i) { return decrs_score(r.model, toy.encoder.encode(u, i)); };
  CHECK(s(0, 0) > s(0, 1));
  CHECK(s(1, 1) > s(1, 0));
}

TEST_CASE("early stopping with a frozen validation metric") {
  const Toy toy = separable_toy();
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.patience = 10;
  cfg.batch_size = 4;
  int calls = 0;
  const TrainResult r = train(make_model(Backbone::kFm, 4, 4, 1), toy.split, toy.encoder, cfg,
                              [&](const Model&) {
                                ++calls;
                                return 0.25;
                              });
  CHECK(r.best_epoch == 1);
  CHECK(r.log.size() == 11);
  CHECK(calls == 11);
}

TEST_CASE("early stopping returns the best checkpoint") {
  const Toy toy = separable_toy();
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.patience = 2;
  cfg.batch_size = 4;
  const std::vector<double> curve = {0.1, 0.2, 0.5, 0.4, 0.3, 0.6};
  int epoch = 0;
  const TrainResult r = train(make_model(Backbone::kFm, 4, 4, 1), toy.split, toy.encoder, cfg,
                              [&](const Model&) { return curve[epoch++]; });
  CHECK(r.best_epoch == 3);
  CHECK(r.log.size() == 5);
  TrainConfig three = cfg;
  three.epochs = 3;
  const TrainResult ref = train(make_model(Backbone::kFm, 4, 4, 1), toy.split, toy.encoder, three);
  CHECK(r.model.params.emb == ref.model.params.emb);
  CHECK(r.model.params.w == ref.model.params.w);
}

TEST_CASE("same seed gives a bitwise-identical log and parameters") {
  SyntheticConfig sc;
  sc.num_users = 30;
  sc.num_items = 50;
  sc.interactions_per_user = 12;
  const SyntheticDataset ds = synthesize_dataset(sc);
  const DatasetSplit split = chronological_split(binarize(ds.interactions, 4));
  const FeatureEncoder enc(make_schema(30, 50, 2), group_membership(ds.item_tags));
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 32;
  for (Backbone b : {Backbone::kFm, Backbone::kNfm}) {
    const auto run = [&](uint64_t seed) {
      TrainConfig c = cfg;
      c.seed = seed;
      return train(make_model(b, enc.schema().num_features(), 8, seed), split, enc, c);
    };
    const TrainResult a = run(5), a2 = run(5), other = run(6);
    REQUIRE(a.log.size() == a2.log.size());
    for (size_t e = 0; e < a.log.size(); ++e) CHECK(a.log[e].loss == a2.log[e].loss);
    CHECK(a.model.params.emb == a2.model.params.emb);
    CHECK(a.model.params.emb != other.model.params.emb);
  }
}

TEST_CASE("a single repeated instance can be fit to near-zero loss") {
  const Toy toy = separable_toy();
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch_size = 1;
  const InstanceSource one = [](int) { return std::vector<TrainingInstance>{{0, 0, 1}}; };
  const TrainResult r = train(make_model(Backbone::kFm, 4, 4, 1), one, toy.encoder, cfg);
  CHECK(r.log.back().loss < 1e-3);
}

TEST_CASE("l2 pulls touched embeddings toward zero") {
  const Toy toy = separable_toy();
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  const auto norm = [](const Model& m) {
    double s = 0.0;
    for (double e : m.params.emb) s += e * e;
    return s;
  };
  TrainConfig reg = cfg;
  reg.l2 = 0.2;
  const TrainResult a = train(make_model(Backbone::kFm, 4, 8, 1), toy.split, toy.encoder, cfg);
  const TrainResult b = train(make_model(Backbone::kFm, 4, 8, 1), toy.split, toy.encoder, reg);
  CHECK(norm(b.model) < norm(a.model));
}

TEST_CASE("non-finite loss aborts with a training error") {
  const Toy toy = separable_toy();
  Model m = make_model(Backbone::kFm, 4, 4, 1);
  m.params.w0 = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  CHECK_THROWS_AS(train(m, toy.split, toy.encoder, cfg), TrainingError);
}

TEST_CASE("config validation and grid membership") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  CHECK(on_grid(c));
  c.lr = 0.02;
  CHECK(!on_grid(c));
  c.lr = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.dropout = 1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.batch_size = 1000;
  CHECK(!on_grid(c));
  c = {};
  c.l2 = 0.1;
  c.dropout = 0.5;
  c.batch_size = 2048;
  c.lr = 0.005;
  CHECK(on_grid(c));
}

TEST_CASE("decrs and plain models share the backbone initialization") {
  const Model plain = make_model(Backbone::kNfm, 20, 8, 9);
  const Model decrs =
      make_decrs_model(Backbone::kNfm, GroupOperator::kFmModule, 20, 8, {0.6, 0.4}, 9);
  CHECK(plain.params.emb == decrs.params.emb);
  CHECK(plain.params.w1 == decrs.params.w1);
  REQUIRE(decrs.backdoor.has_value());
  CHECK(decrs.backdoor->v.size() == 16);
}

}  // namespace
}  // namespace decrs
