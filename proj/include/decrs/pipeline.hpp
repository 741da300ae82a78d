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
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decrs/backdoor.hpp"
#include "decrs/confounder.hpp"
#include "decrs/corpus.hpp"
#include "decrs/metrics.hpp"
#include "decrs/trainer.hpp"

namespace decrs {

// Flat "key = value" configuration. Lines starting with '#' are comments;
// later assignments override earlier ones.
class Config {
 public:
  static Config parse(std::istream& in, std::string_view source_name);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Sorted "key = value" lines.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> entries_;
};

enum class Variant : uint8_t { kBaseline, kDecrsEp, kDecrsFm, kUnawareness };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
bool is_decrs(Variant v);

// Fully resolved settings of one run.
struct RunConfig {
  // "files" reads interactions/item_metadata; "synthetic" generates data.
  std::string source = "files";
  std::filesystem::path interactions;
  std::filesystem::path item_metadata;
  std::filesystem::path user_features;  // optional
  std::string delimiter = "auto";
  bool header = false;
  int k_core = 20;
  double positive_threshold = 4.0;
  SyntheticConfig synthetic;

  Backbone backbone = Backbone::kFm;
  Variant variant = Variant::kBaseline;
  int32_t dim = 64;
  TrainConfig train;
  bool grid_check = true;

  double alpha = 0.3;
  bool alpha_auto = false;  // pick alpha on validation R@10
  std::vector<int> ks = {10, 20};
  int calibration_pool = 100;
  std::filesystem::path output_dir = "runs";

  // Unknown keys and invalid values raise ConfigError.
  static RunConfig from(const Config& config);
  Config to_config() const;
  // Hash of everything that determines the trained checkpoints.
  std::string run_id() const;
};

// Every key RunConfig understands.
const std::vector<std::string>& known_config_keys();

struct PreparedData {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  DatasetSplit split;
  GroupTable groups;
  UserAttributes attributes;
  ConfounderPrior prior;
  DriftTable drift;
};

// Load (or synthesize), k-core, binarize, split, then derive groups, prior
// and drift scores.
PreparedData prepare(const RunConfig& config);
void write_prepared(const std::filesystem::path& dir, const PreparedData& data);
PreparedData read_prepared(const std::filesystem::path& dir);

FeatureEncoder make_encoder(const PreparedData& data, bool drop_groups);

// Per-user sorted positives of `rows`.
std::vector<std::vector<int32_t>> positives_by_user(const std::vector<Interaction>& rows,
                                                    int32_t num_users);

// Recall@k of a single model against validation positives.
double validation_recall(const Model& model, const FeatureEncoder& encoder,
                         const PreparedData& data, int k = 10);

struct TrainedRun {
  Model rs;                 // conventional model (or the only model)
  std::optional<Model> de;  // deconfounded model for decrs variants
  std::vector<EpochStats> rs_log;
  std::vector<EpochStats> de_log;
};

TrainedRun train_run(const PreparedData& data, const RunConfig& config);

struct EvalOptions {
  bool fusion = true;
  std::optional<double> calibration_lambda;
};

struct EvalOutput {
  EvalReport report;
  std::vector<RankedList> lists;
  double alpha = 0.0;
};

EvalOutput evaluate_run(const PreparedData& data, const RunConfig& config, const TrainedRun& run,
                        const EvalOptions& options);

// Picks alpha from {0.1, 0.2, ..., 10} by validation R@10 of the fused ranking.
double select_alpha(const PreparedData& data, const FeatureEncoder& encoder, const Model& rs,
                    const Model& de);

std::string report_label(const RunConfig& config, const EvalOptions& options);

void write_report(const std::filesystem::path& dir, const EvalOutput& output,
                  const PreparedData& data, const RunConfig& config);

// (b - a) / a per shared metric, read from two metrics.tsv files (or the
// report directories holding them). A metric present in one and not the
// other is an error naming it.
struct Comparison {
  std::string label_a, label_b;
  std::vector<std::string> metrics;
  std::vector<double> a, b, relative;
};
Comparison compare_reports(const std::filesystem::path& a, const std::filesystem::path& b);
std::string format_comparison(const Comparison& c);

// Directory layout under output_dir.
std::filesystem::path prepared_dir(const RunConfig& config);
std::filesystem::path checkpoint_dir(const RunConfig& config);
std::filesystem::path report_dir(const RunConfig& config, const EvalOptions& options);

void cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);
void cmd_prepare(const RunConfig& config);
void cmd_train(const RunConfig& config);
std::filesystem::path cmd_evaluate(const RunConfig& config, const EvalOptions& options);
std::string cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace decrs
