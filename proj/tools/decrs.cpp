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


// Command-line front end: synth, prepare, train, evaluate, compare.
//
//   decrs prepare  --config run.cfg
//   decrs train    --config run.cfg --set variant=decrs-fm
//   decrs evaluate --config run.cfg --set variant=decrs-fm [--no-fusion]
//   decrs compare  runs/reports/<a>/fm runs/reports/<b>/decrs

#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "decrs/error.hpp"
#include "decrs/pipeline.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

// "synth.num_users" -> "--synth-num-users".
std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += (c == '_' || c == '.') ? '-' : c;
  return out;
}

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> flags;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value configuration file");
  cmd->add_option("--set", opts.overrides, "override a config key (key=value)");
  for (const std::string& key : decrs::known_config_keys()) {
    cmd->add_option(flag_name(key), opts.flags[key], "config key " + key);
  }
}

decrs::RunConfig resolve(const CommonOptions& opts, const CLI::App* cmd) {
  decrs::Config config;
  if (!opts.config_path.empty()) config = decrs::Config::load(opts.config_path);
  for (const auto& [key, value] : opts.flags) {
    if (cmd->count(flag_name(key)) > 0) config.set(key, value);
  }
  for (const std::string& kv : opts.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw decrs::ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    }
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return decrs::RunConfig::from(config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deconfounded recommendation: data preparation, training and evaluation"};
  app.require_subcommand(1);

  CommonOptions synth_opts, prepare_opts, train_opts, eval_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic interaction log and item groups");
  add_common(synth, synth_opts);
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* prepare = app.add_subcommand("prepare", "filter, binarize and split a dataset");
  add_common(prepare, prepare_opts);

  auto* train = app.add_subcommand("train", "train the configured variant");
  add_common(train, train_opts);

  bool no_fusion = false;
  std::optional<double> calibration;
  auto* evaluate = app.add_subcommand("evaluate", "rank test users and write reports");
  add_common(evaluate, eval_opts);
  evaluate->add_flag("--no-fusion", no_fusion, "rank by the deconfounded model alone");
  evaluate->add_option("--calibration", calibration, "calibrated re-rank with this lambda");

  std::string report_a, report_b;
  auto* compare = app.add_subcommand("compare", "relative change of report B over report A");
  compare->add_option("a", report_a, "baseline report directory or metrics.tsv")->required();
  compare->add_option("b", report_b, "compared report directory or metrics.tsv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (synth->parsed()) {
      decrs::cmd_synth(resolve(synth_opts, synth), synth_out);
      fmt::print("wrote {}\n", synth_out);
    } else if (prepare->parsed()) {
      const decrs::RunConfig config = resolve(prepare_opts, prepare);
      decrs::cmd_prepare(config);
      fmt::print("prepared {}\n", decrs::prepared_dir(config).string());
    } else if (train->parsed()) {
      const decrs::RunConfig config = resolve(train_opts, train);
      decrs::cmd_train(config);
      fmt::print("checkpoints in {}\n", decrs::checkpoint_dir(config).string());
    } else if (evaluate->parsed()) {
      const decrs::RunConfig config = resolve(eval_opts, evaluate);
      decrs::EvalOptions options;
      options.fusion = !no_fusion;
      options.calibration_lambda = calibration;
      const auto dir = decrs::cmd_evaluate(config, options);
      std::FILE* metrics = std::fopen((dir / "metrics.tsv").string().c_str(), "r");
      if (metrics != nullptr) {
        char buf[512];
        while (std::fgets(buf, sizeof(buf), metrics) != nullptr) std::fputs(buf, stdout);
        std::fclose(metrics);
      }
      fmt::print("report in {}\n", dir.string());
    } else if (compare->parsed()) {
      fmt::print("{}", decrs::cmd_compare(report_a, report_b));
    }
  } catch (const decrs::ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntimeError;
  }
  return 0;
}
