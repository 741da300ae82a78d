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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "decrs/error.hpp"
#include "decrs/pipeline.hpp"

namespace fs = std::filesystem;

namespace decrs {
namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("decrs_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test");
}

Config tiny(const fs::path& out) {
  return parse(
      "source = synthetic\n"
      "synth.num_users = 60\n"
      "synth.num_items = 40\n"
      "synth.interactions_per_user = 15\n"
      "k_core = 3\n"
      "dim = 4\n"
      "epochs = 2\n"
      "batch_size = 512\n"
      "output_dir = " + out.string() + "\n");
}

TEST_CASE("config parsing, overrides and round trip") {
  const Config c = parse("# comment\nmodel = nfm\n\ndim = 8\ndim = 16\nvariant = decrs-ep\n");
  CHECK(c.get("dim") == "16");
  const RunConfig r = RunConfig::from(c);
  CHECK(r.backbone == Backbone::kNfm);
  CHECK(r.dim == 16);
  CHECK(r.variant == Variant::kDecrsEp);
  const RunConfig again = RunConfig::from(r.to_config());
  CHECK(again.to_config().serialize() == r.to_config().serialize());
  CHECK(again.run_id() == r.run_id());
  CHECK_THROWS_AS(parse("no equals sign\n"), ConfigError);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(RunConfig::from(parse("dimension = 3\n")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from(parse("lr = 0.02\n")), ConfigError);
  CHECK_NOTHROW(RunConfig::from(parse("lr = 0.02\ngrid_check = false\n")));
  CHECK_THROWS_AS(RunConfig::from(parse("dim = abc\n")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from(parse("variant = other\n")), ConfigError);
  CHECK(RunConfig::from(parse("alpha = auto\n")).alpha_auto);
  const Config full = RunConfig::from(parse("source = synthetic\n")).to_config();
  for (const auto& key : known_config_keys()) CHECK(full.has(key));
}

TEST_CASE("run id depends on training keys only") {
  const RunConfig a = RunConfig::from(parse("dim = 8\n"));
  const RunConfig b = RunConfig::from(parse("dim = 8\nalpha = 2\nk_list = 5\n"));
  const RunConfig c = RunConfig::from(parse("dim = 16\n"));
  CHECK(a.run_id() == b.run_id());
  CHECK(a.run_id() != c.run_id());
}

TEST_CASE("prepare is complete and deterministic") {
  const fs::path root = scratch("prepare");
  const RunConfig cfg = RunConfig::from(tiny(root));
  const PreparedData d = prepare(cfg);
  CHECK(d.split.num_users == static_cast<int32_t>(d.user_ids.size()));
  CHECK(d.groups.num_items() == static_cast<int32_t>(d.item_ids.size()));
  CHECK(is_simplex(d.prior.expectation.p));
  CHECK(d.drift.users.size() == d.user_ids.size());
  RunConfig other = cfg;
  other.output_dir = root / "second";
  cmd_prepare(cfg);
  cmd_prepare(other);
  int files = 0;
  for (const auto& e : fs::directory_iterator(prepared_dir(cfg))) {
    CHECK(slurp(e.path()) == slurp(prepared_dir(other) / e.path().filename()));
    ++files;
  }
  CHECK(files >= 10);
  const PreparedData back = read_prepared(prepared_dir(cfg));
  CHECK(back.user_ids == d.user_ids);
  CHECK(back.split.train.size() == d.split.train.size());
  CHECK(back.split.test.size() == d.split.test.size());
  CHECK(back.groups.values() == d.groups.values());
  CHECK(back.prior.expectation.p == d.prior.expectation.p);
  CHECK(back.drift.users.size() == d.drift.users.size());
  for (size_t u = 0; u < d.drift.users.size(); ++u) {
    CHECK(back.drift.users[u].eta_hat == doctest::Approx(d.drift.users[u].eta_hat).epsilon(1e-12));
  }
}

TEST_CASE("missing item metadata is a configuration error") {
  const fs::path root = scratch("missing");
  std::ofstream(root / "inter.tsv") << "u1\ti1\t5\t1\n";
  Config c = parse("interactions = " + (root / "inter.tsv").string() + "\n");
  CHECK_THROWS_AS(cmd_prepare(RunConfig::from(c)), ConfigError);
  c.set("item_metadata", (root / "absent.tsv").string());
  CHECK_THROWS_AS(cmd_prepare(RunConfig::from(c)), ConfigError);
}

TEST_CASE("train, evaluate and compare end to end") {
  const fs::path root = scratch("e2e");
  Config c = tiny(root);
  c.set("variant", "decrs-fm");
  const RunConfig cfg = RunConfig::from(c);
  CHECK_THROWS_AS(cmd_train(cfg), ConfigError);  // not prepared yet
  cmd_prepare(cfg);
  cmd_train(cfg);
  CHECK(fs::exists(checkpoint_dir(cfg) / "rs.ckpt"));
  CHECK(fs::exists(checkpoint_dir(cfg) / "de.ckpt"));
  const fs::path fused = cmd_evaluate(cfg, {});
  const fs::path wo = cmd_evaluate(cfg, {.fusion = false});
  for (const char* f : {"metrics.tsv", "per_user.tsv", "drift_buckets.tsv", "group_shares.tsv",
                        "rankings.tsv", "summary.json"}) {
    CHECK(fs::exists(fused / f));
  }
  const std::string text = cmd_compare(wo, fused);
  CHECK(text.find("C_KL") != std::string::npos);
  CHECK(text.find("N@20") != std::string::npos);

  // Evaluating twice reproduces the same numbers.
  const std::string first = slurp(fused / "metrics.tsv");
  cmd_evaluate(cfg, {});
  CHECK(slurp(fused / "metrics.tsv") == first);

  // Changing the data invalidates the prepared artifacts.
  Config stale = c;
  stale.set("synth.seed", "99");
  CHECK_THROWS_AS(cmd_train(RunConfig::from(stale)), ConfigError);
}

TEST_CASE("comparison arithmetic and mismatched metrics") {
  const fs::path root = scratch("compare");
  std::ofstream(root / "a.tsv") << "method\tR@20\nFM\t0.1162\n";
  std::ofstream(root / "b.tsv") << "method\tR@20\nDecRS\t0.1231\n";
  std::ofstream(root / "c.tsv") << "method\tN@20\nDecRS\t0.1231\n";
  const Comparison cmp = compare_reports(root / "a.tsv", root / "b.tsv");
  REQUIRE(cmp.relative.size() == 1);
  CHECK(cmp.relative[0] * 100 == doctest::Approx(5.94).epsilon(1e-3));
  CHECK(format_comparison(cmp).find("+5.94%") != std::string::npos);
  try {
    compare_reports(root / "a.tsv", root / "c.tsv");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("R@20") != std::string::npos);
  }
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(DECRS_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_CASE("command line exit codes") {
  const fs::path root = scratch("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("prepare --set dimension=3") == 2);
  CHECK(run_cli("prepare --interactions " + (root / "none.tsv").string()) == 2);
  CHECK(run_cli("synth --out " + (root / "data").string() + " --synth-num-users 30") == 0);
  CHECK(fs::exists(root / "data" / "interactions.tsv"));
  CHECK(run_cli("compare " + (root / "x").string() + " " + (root / "y").string()) != 0);
}

}  // namespace
}  // namespace decrs
