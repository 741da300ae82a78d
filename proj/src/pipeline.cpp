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


#include "decrs/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "decrs/checkpoint.hpp"
#include "decrs/error.hpp"
#include "decrs/inference.hpp"

namespace decrs {
namespace {

namespace fs = std::filesystem;

constexpr int kPreparedFormatVersion = 1;

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, char delim) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

template <typename T>
T number_value(const std::string& key, std::string_view text) {
  T out{};
  if (!parse_number(trim(text), out)) {
    throw ConfigError(fmt::format("{}: invalid value '{}'", key, text));
  }
  return out;
}

bool bool_value(const std::string& key, std::string_view text) {
  const std::string_view t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

template <typename T>
std::vector<T> list_value(const std::string& key, std::string_view text) {
  std::vector<T> out;
  for (std::string_view part : split_on(text, ',')) out.push_back(number_value<T>(key, part));
  return out;
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const auto* table = new std::map<std::string, Setter>{
      {"source", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "files" && v != "synthetic") {
           throw ConfigError(fmt::format("{}: expected files or synthetic, got '{}'", k, v));
         }
         c.source = v;
       }},
      {"interactions", [](RunConfig& c, auto&, const std::string& v) { c.interactions = v; }},
      {"item_metadata", [](RunConfig& c, auto&, const std::string& v) { c.item_metadata = v; }},
      {"user_features", [](RunConfig& c, auto&, const std::string& v) { c.user_features = v; }},
      {"delimiter", [](RunConfig& c, auto&, const std::string& v) { c.delimiter = v; }},
      {"header", [](RunConfig& c, auto& k, const std::string& v) { c.header = bool_value(k, v); }},
      {"k_core",
       [](RunConfig& c, auto& k, const std::string& v) { c.k_core = number_value<int>(k, v); }},
      {"positive_threshold",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.positive_threshold = number_value<double>(k, v);
       }},
      {"synth.num_users",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.num_users = number_value<int32_t>(k, v);
       }},
      {"synth.num_items",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.num_items = number_value<int32_t>(k, v);
       }},
      {"synth.num_groups",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.num_groups = number_value<int32_t>(k, v);
       }},
      {"synth.train_preference",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.train_preference = list_value<double>(k, v);
       }},
      {"synth.test_preference",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.test_preference = list_value<double>(k, v);
       }},
      {"synth.drift_fraction",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.drift_fraction = number_value<double>(k, v);
       }},
      {"synth.interactions_per_user",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.interactions_per_user = number_value<int32_t>(k, v);
       }},
      {"synth.train_share",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.train_share = number_value<double>(k, v);
       }},
      {"synth.ramp",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.ramp = number_value<double>(k, v);
       }},
      {"synth.quality_sigma",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.quality_sigma = number_value<double>(k, v);
       }},
      {"synth.seed",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.synthetic.seed = number_value<uint64_t>(k, v);
       }},
      {"model",
       [](RunConfig& c, auto& k, const std::string& v) {
         if (v == "fm") {
           c.backbone = Backbone::kFm;
         } else if (v == "nfm") {
           c.backbone = Backbone::kNfm;
         } else {
           throw ConfigError(fmt::format("{}: expected fm or nfm, got '{}'", k, v));
         }
       }},
      {"variant", [](RunConfig& c, auto&, const std::string& v) { c.variant = parse_variant(v); }},
      {"dim", [](RunConfig& c, auto& k, const std::string& v) { c.dim = number_value<int32_t>(k, v); }},
      {"lr",
       [](RunConfig& c, auto& k, const std::string& v) { c.train.lr = number_value<double>(k, v); }},
      {"group_lr",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.train.group_lr = number_value<double>(k, v);
       }},
      {"batch_size",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.train.batch_size = number_value<int>(k, v);
       }},
      {"l2",
       [](RunConfig& c, auto& k, const std::string& v) { c.train.l2 = number_value<double>(k, v); }},
      {"dropout",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.train.dropout = number_value<double>(k, v);
       }},
      {"epochs",
       [](RunConfig& c, auto& k, const std::string& v) { c.train.epochs = number_value<int>(k, v); }},
      {"patience",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.train.patience = number_value<int>(k, v);
       }},
      {"seed",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.train.seed = number_value<uint64_t>(k, v);
       }},
      {"negatives",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.train.negatives = number_value<int>(k, v);
       }},
      {"grid_check",
       [](RunConfig& c, auto& k, const std::string& v) { c.grid_check = bool_value(k, v); }},
      {"alpha",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.alpha_auto = trim(v) == "auto";
         if (!c.alpha_auto) c.alpha = number_value<double>(k, v);
       }},
      {"k_list", [](RunConfig& c, auto& k, const std::string& v) { c.ks = list_value<int>(k, v); }},
      {"calibration_pool",
       [](RunConfig& c, auto& k, const std::string& v) {
         c.calibration_pool = number_value<int>(k, v);
       }},
      {"output_dir", [](RunConfig& c, auto&, const std::string& v) { c.output_dir = v; }},
  };
  return *table;
}

// Keys that do not change the prepared data or the trained parameters.
bool is_evaluation_key(const std::string& key) {
  return key == "alpha" || key == "k_list" || key == "calibration_pool" ||
         key == "output_dir" || key == "grid_check";
}

bool is_data_key(const std::string& key) {
  return key == "source" || key == "interactions" || key == "item_metadata" ||
         key == "user_features" || key == "delimiter" || key == "header" || key == "k_core" ||
         key == "positive_threshold" || key.starts_with("synth.");
}

std::string hash_keys(const Config& config, const std::function<bool(const std::string&)>& pick) {
  std::string text;
  for (const auto& [k, v] : config.entries()) {
    if (pick(k)) text += fmt::format("{}={}\n", k, v);
  }
  return fmt::format("{:016x}", fnv1a(text));
}

std::string data_hash(const RunConfig& config) {
  return hash_keys(config.to_config(), is_data_key);
}

DelimitedFormat delimited_format(const RunConfig& config) {
  DelimitedFormat format;
  format.header = config.header;
  if (config.delimiter == "auto") {
    format.delimiter = "";
  } else if (config.delimiter == "tab") {
    format.delimiter = "\t";
  } else if (config.delimiter == "comma") {
    format.delimiter = ",";
  } else {
    format.delimiter = config.delimiter;
  }
  return format;
}

std::ifstream open_or_throw(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("file not found: {}", path.string()));
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  return in;
}

UserAttributes align_user_attributes(
    const std::vector<std::string>& user_ids,
    const std::unordered_map<std::string, std::vector<std::string>>& meta) {
  std::set<std::string> vocabulary;
  for (const auto& id : user_ids) {
    auto it = meta.find(id);
    if (it != meta.end()) vocabulary.insert(it->second.begin(), it->second.end());
  }
  UserAttributes out;
  out.names.assign(vocabulary.begin(), vocabulary.end());
  out.per_user.resize(user_ids.size());
  for (size_t u = 0; u < user_ids.size(); ++u) {
    auto it = meta.find(user_ids[u]);
    if (it == meta.end()) continue;
    std::set<int32_t> ids;
    for (const auto& tag : it->second) {
      ids.insert(static_cast<int32_t>(
          std::lower_bound(out.names.begin(), out.names.end(), tag) - out.names.begin()));
    }
    out.per_user[u].assign(ids.begin(), ids.end());
  }
  return out;
}

void write_rows(const fs::path& path, const std::vector<Interaction>& rows) {
  auto out = fmt::output_file(path.string());
  out.print("user\titem\trating\ttimestamp\tlabel\n");
  for (const auto& r : rows) {
    out.print("{}\t{}\t{}\t{}\t{}\n", r.user, r.item, r.rating, r.timestamp, int{r.label});
  }
}

std::vector<Interaction> read_rows(const fs::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<Interaction> rows;
  std::string line;
  std::getline(in, line);
  int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    Interaction r;
    int label = 0;
    if (cols.size() != 5 || !parse_number(cols[0], r.user) || !parse_number(cols[1], r.item) ||
        !parse_number(cols[2], r.rating) || !parse_number(cols[3], r.timestamp) ||
        !parse_number(cols[4], label)) {
      throw ParseError(fmt::format("{}:{}: malformed row", path.string(), line_no));
    }
    r.label = static_cast<int8_t>(label);
    rows.push_back(r);
  }
  return rows;
}

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
  auto out = fmt::output_file(path.string());
  out.print("index\tid\n");
  for (size_t i = 0; i < ids.size(); ++i) out.print("{}\t{}\n", i, ids[i]);
}

std::vector<std::string> read_ids(const fs::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<std::string> ids;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 2) throw ParseError(fmt::format("{}: malformed id row", path.string()));
    ids.emplace_back(cols[1]);
  }
  return ids;
}

std::vector<GroupDistribution> history_distributions(const PreparedData& data) {
  std::vector<GroupDistribution> out(data.split.num_users);
  for (int32_t u = 0; u < data.split.num_users; ++u) {
    if (!data.split.history[u].empty()) {
      out[u] = user_group_distribution(data.split.history[u], data.groups);
    }
  }
  return out;
}

std::string slug(std::string_view label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (c == ' ' && !out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

void write_log(const fs::path& path, const std::vector<EpochStats>& log) {
  auto out = fmt::output_file(path.string());
  out.print("epoch\tloss\tvalid_recall@10\n");
  for (const auto& e : log) out.print("{}\t{:.6f}\t{:.6f}\n", e.epoch, e.loss, e.valid_recall);
}

void write_snapshot(const fs::path& path, const RunConfig& config) {
  auto out = fmt::output_file(path.string());
  out.print("{}", config.to_config().serialize());
}

struct MetricsRow {
  std::string label;
  std::vector<std::string> names;
  std::vector<double> values;
};

MetricsRow read_metrics(fs::path path) {
  if (fs::is_directory(path)) path /= "metrics.tsv";
  std::ifstream in = open_or_throw(path);
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row)) {
    throw ParseError(fmt::format("{}: expected a header and one row", path.string()));
  }
  const auto names = split_on(header, '\t');
  const auto cells = split_on(row, '\t');
  if (names.size() != cells.size() || names.size() < 2) {
    throw ParseError(fmt::format("{}: header and row widths differ", path.string()));
  }
  MetricsRow out;
  out.label = std::string(cells[0]);
  for (size_t c = 1; c < names.size(); ++c) {
    double v = 0.0;
    if (!parse_number(cells[c], v)) {
      throw ParseError(fmt::format("{}: bad value for {}", path.string(), names[c]));
    }
    out.names.emplace_back(names[c]);
    out.values.push_back(v);
  }
  return out;
}

}  // namespace

// ---- Config ----

Config Config::parse(std::istream& in, std::string_view source_name) {
  Config config;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source_name, line_no));
    }
    const std::string_view key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", source_name, line_no));
    config.set(std::string(key), std::string(trim(t.substr(eq + 1))));
  }
  return config;
}

Config Config::load(const fs::path& path) {
  std::ifstream in = open_or_throw(path);
  return parse(in, path.string());
}

void Config::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

const std::string& Config::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(fmt::format("missing config key '{}'", key));
  return it->second;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += fmt::format("{} = {}\n", k, v);
  return out;
}

// ---- RunConfig ----

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kDecrsEp: return "decrs-ep";
    case Variant::kDecrsFm: return "decrs-fm";
    case Variant::kUnawareness: return "unawareness";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "decrs-ep") return Variant::kDecrsEp;
  if (name == "decrs-fm" || name == "decrs") return Variant::kDecrsFm;
  if (name == "unawareness") return Variant::kUnawareness;
  throw ConfigError(fmt::format(
      "variant: expected baseline, decrs-ep, decrs-fm or unawareness, got '{}'", name));
}

bool is_decrs(Variant v) { return v == Variant::kDecrsEp || v == Variant::kDecrsFm; }

const std::vector<std::string>& known_config_keys() {
  static const auto* keys = [] {
    auto* out = new std::vector<std::string>;
    for (const auto& [k, _] : setters()) out->push_back(k);
    return out;
  }();
  return *keys;
}

RunConfig RunConfig::from(const Config& config) {
  RunConfig out;
  for (const auto& [key, value] : config.entries()) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
    it->second(out, key, value);
  }
  validate(out.train);
  if (out.grid_check && !on_grid(out.train)) {
    throw ConfigError(
        "training hyperparameters are off the search grid "
        "(lr {0.005,0.01,0.05}, batch_size {512,1024,2048}, l2 {0,0.1,0.2}, "
        "dropout {0.2,...,0.5}); set grid_check = false to allow");
  }
  if (out.k_core < 1) throw ConfigError("k_core must be >= 1");
  if (out.dim < 1) throw ConfigError("dim must be >= 1");
  if (!out.alpha_auto && !(out.alpha > 0.0)) throw ConfigError("alpha must be > 0 or auto");
  if (out.ks.empty()) throw ConfigError("k_list must not be empty");
  for (int k : out.ks) {
    if (k < 1) throw ConfigError("k_list entries must be >= 1");
  }
  if (out.calibration_pool < 1) throw ConfigError("calibration_pool must be >= 1");
  return out;
}

Config RunConfig::to_config() const {
  Config c;
  c.set("source", source);
  c.set("interactions", interactions.string());
  c.set("item_metadata", item_metadata.string());
  c.set("user_features", user_features.string());
  c.set("delimiter", delimiter);
  c.set("header", header ? "true" : "false");
  c.set("k_core", fmt::format("{}", k_core));
  c.set("positive_threshold", fmt::format("{}", positive_threshold));
  if (source == "synthetic") {
    const SyntheticConfig& s = synthetic;
    c.set("synth.num_users", fmt::format("{}", s.num_users));
    c.set("synth.num_items", fmt::format("{}", s.num_items));
    c.set("synth.num_groups", fmt::format("{}", s.num_groups));
    c.set("synth.train_preference", fmt::format("{}", fmt::join(s.train_preference, ",")));
    c.set("synth.test_preference", fmt::format("{}", fmt::join(s.test_preference, ",")));
    c.set("synth.drift_fraction", fmt::format("{}", s.drift_fraction));
    c.set("synth.interactions_per_user", fmt::format("{}", s.interactions_per_user));
    c.set("synth.train_share", fmt::format("{}", s.train_share));
    c.set("synth.ramp", fmt::format("{}", s.ramp));
    c.set("synth.quality_sigma", fmt::format("{}", s.quality_sigma));
    c.set("synth.seed", fmt::format("{}", s.seed));
  }
  c.set("model", backbone == Backbone::kFm ? "fm" : "nfm");
  c.set("variant", std::string(to_string(variant)));
  c.set("dim", fmt::format("{}", dim));
  c.set("lr", fmt::format("{}", train.lr));
  c.set("group_lr", fmt::format("{}", train.group_lr));
  c.set("batch_size", fmt::format("{}", train.batch_size));
  c.set("l2", fmt::format("{}", train.l2));
  c.set("dropout", fmt::format("{}", train.dropout));
  c.set("epochs", fmt::format("{}", train.epochs));
  c.set("patience", fmt::format("{}", train.patience));
  c.set("seed", fmt::format("{}", train.seed));
  c.set("negatives", fmt::format("{}", train.negatives));
  c.set("grid_check", grid_check ? "true" : "false");
  c.set("alpha", alpha_auto ? "auto" : fmt::format("{}", alpha));
  c.set("k_list", fmt::format("{}", fmt::join(ks, ",")));
  c.set("calibration_pool", fmt::format("{}", calibration_pool));
  c.set("output_dir", output_dir.string());
  return c;
}

std::string RunConfig::run_id() const {
  const std::string h =
      hash_keys(to_config(), [](const std::string& k) { return !is_evaluation_key(k); });
  return fmt::format("{}-{}-{}", backbone == Backbone::kFm ? "fm" : "nfm", to_string(variant),
                     h.substr(0, 12));
}

// ---- Data preparation ----

PreparedData prepare(const RunConfig& config) {
  InteractionSet set;
  std::unordered_map<std::string, std::vector<std::string>> meta;
  std::vector<std::string> group_names;
  const DelimitedFormat format = delimited_format(config);
  if (config.source == "synthetic") {
    SyntheticDataset ds = synthesize_dataset(config.synthetic);
    for (size_t i = 0; i < ds.item_tags.size(); ++i) {
      meta[ds.interactions.item_ids[i]] = ds.item_tags[i];
    }
    set = std::move(ds.interactions);
    group_names = std::move(ds.group_names);
  } else {
    if (config.interactions.empty()) throw ConfigError("interactions is required");
    if (config.item_metadata.empty()) throw ConfigError("item_metadata is required");
    set = load_interactions(config.interactions, format);
    meta = load_item_metadata(config.item_metadata, format);
  }
  set = binarize(apply_k_core(set, config.k_core), config.positive_threshold);

  PreparedData data;
  data.split = chronological_split(set);
  const ItemTags tags = align_item_tags(set, meta);
  data.groups = group_names.empty() ? group_membership(tags) : group_membership(tags, group_names);
  if (!config.user_features.empty()) {
    data.attributes =
        align_user_attributes(set.user_ids, load_item_metadata(config.user_features, format));
  }
  data.user_ids = std::move(set.user_ids);
  data.item_ids = std::move(set.item_ids);
  data.prior = confounder_prior(data.split.history, data.groups);
  data.drift = compute_drift(data.split.history, data.groups, config.alpha_auto ? 1.0 : config.alpha);
  return data;
}

void write_prepared(const fs::path& dir, const PreparedData& data) {
  fs::create_directories(dir);
  write_ids(dir / "users.tsv", data.user_ids);
  write_ids(dir / "items.tsv", data.item_ids);
  write_rows(dir / "train.tsv", data.split.train);
  write_rows(dir / "valid.tsv", data.split.valid);
  write_rows(dir / "test.tsv", data.split.test);
  {
    auto out = fmt::output_file((dir / "groups.tsv").string());
    out.print("item\t{}\n", fmt::join(data.groups.names(), "\t"));
    for (int32_t i = 0; i < data.groups.num_items(); ++i) {
      out.print("{}\t{}\n", i, fmt::join(data.groups.q(i), "\t"));
    }
  }
  {
    auto out = fmt::output_file((dir / "user_attributes.tsv").string());
    out.print("# {}\n", fmt::join(data.attributes.names, "\t"));
    for (size_t u = 0; u < data.attributes.per_user.size(); ++u) {
      out.print("{}\t{}\n", u, fmt::join(data.attributes.per_user[u], ","));
    }
  }
  {
    auto out = fmt::output_file((dir / "histories.tsv").string());
    out.print("user\titems\n");
    for (size_t u = 0; u < data.split.history.size(); ++u) {
      out.print("{}\t{}\n", u, fmt::join(data.split.history[u], ","));
    }
  }
  {
    auto out = fmt::output_file((dir / "prior.tsv").string());
    out.print("user\tweight\t{}\n", fmt::join(data.groups.names(), "\t"));
    for (size_t e = 0; e < data.prior.users.size(); ++e) {
      out.print("{}\t{}\t{}\n", data.prior.users[e], data.prior.weights[e],
                fmt::join(data.prior.entries[e].p, "\t"));
    }
  }
  {
    auto out = fmt::output_file((dir / "dbar.tsv").string());
    out.print("group\tweight\n");
    for (int32_t n = 0; n < data.groups.num_groups(); ++n) {
      out.print("{}\t{}\n", data.groups.names()[n], data.prior.expectation.p[n]);
    }
  }
  write_drift(dir / "drift.tsv", data.drift);
}

PreparedData read_prepared(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) {
    throw ConfigError(fmt::format("no prepared data in {}; run prepare first", dir.string()));
  }
  const Config manifest = Config::load(dir / "manifest.txt");
  if (manifest.get("format_version") != fmt::format("{}", kPreparedFormatVersion)) {
    throw ConfigError(fmt::format("{}: unsupported format_version {}", dir.string(),
                                  manifest.get("format_version")));
  }
  PreparedData data;
  data.user_ids = read_ids(dir / "users.tsv");
  data.item_ids = read_ids(dir / "items.tsv");
  const auto nu = static_cast<int32_t>(data.user_ids.size());
  const auto ni = static_cast<int32_t>(data.item_ids.size());
  data.split = make_split(nu, ni, read_rows(dir / "train.tsv"), read_rows(dir / "valid.tsv"),
                          read_rows(dir / "test.tsv"));
  {
    std::ifstream in = open_or_throw(dir / "groups.tsv");
    std::string line;
    std::getline(in, line);
    auto header = split_on(line, '\t');
    std::vector<std::string> names(header.begin() + 1, header.end());
    std::vector<double> q;
    q.reserve(static_cast<size_t>(ni) * names.size());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cols = split_on(line, '\t');
      if (cols.size() != names.size() + 1) {
        throw ParseError(fmt::format("{}: malformed group row", (dir / "groups.tsv").string()));
      }
      for (size_t c = 1; c < cols.size(); ++c) q.push_back(number_value<double>("groups", cols[c]));
    }
    data.groups = GroupTable(std::move(names), ni, std::move(q));
  }
  {
    std::ifstream in = open_or_throw(dir / "user_attributes.tsv");
    std::string line;
    std::getline(in, line);
    const std::string_view names = trim(std::string_view(line).substr(1));
    if (!names.empty()) {
      for (auto n : split_on(names, '\t')) data.attributes.names.emplace_back(n);
    }
    data.attributes.per_user.resize(nu);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cols = split_on(line, '\t');
      const auto u = number_value<int32_t>("user_attributes", cols[0]);
      if (cols.size() > 1 && !cols[1].empty()) {
        data.attributes.per_user.at(u) = list_value<int32_t>("user_attributes", cols[1]);
      }
    }
  }
  data.prior = confounder_prior(data.split.history, data.groups);
  data.drift = read_drift(dir / "drift.tsv");
  return data;
}

FeatureEncoder make_encoder(const PreparedData& data, bool drop_groups) {
  FeatureSchema schema =
      make_schema(data.split.num_users, data.split.num_items, data.groups.num_groups(),
                  static_cast<int32_t>(data.attributes.names.size()));
  if (drop_groups) schema = drop_group_features(schema);
  return FeatureEncoder(std::move(schema), data.groups, data.attributes);
}

std::vector<std::vector<int32_t>> positives_by_user(const std::vector<Interaction>& rows,
                                                    int32_t num_users) {
  std::vector<std::vector<int32_t>> out(num_users);
  for (const auto& r : rows) {
    if (r.label == 1) out[r.user].push_back(r.item);
  }
  for (auto& items : out) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return out;
}

double validation_recall(const Model& model, const FeatureEncoder& encoder,
                         const PreparedData& data, int k) {
  const auto relevant = positives_by_user(data.split.valid, data.split.num_users);
  const ModelScorer scorer(model, encoder);
  double total = 0.0;
  int64_t users = 0;
  for (int32_t u = 0; u < data.split.num_users; ++u) {
    if (relevant[u].empty()) continue;
    const auto candidates = candidate_items(data.split, u);
    total += recall_at_k(rank_single(scorer, u, candidates, k), relevant[u], k);
    ++users;
  }
  return users == 0 ? 0.0 : total / static_cast<double>(users);
}

// ---- Training ----

TrainedRun train_run(const PreparedData& data, const RunConfig& config) {
  const FeatureEncoder encoder = make_encoder(data, config.variant == Variant::kUnawareness);
  const ValidationHook hook = [&](const Model& m) {
    return validation_recall(m, encoder, data, 10);
  };
  TrainResult rs = train(make_model(config.backbone, encoder.schema().num_features(), config.dim,
                                    config.train.seed),
                         data.split, encoder, config.train, hook);
  TrainedRun out{std::move(rs.model), std::nullopt, std::move(rs.log), {}};
  if (is_decrs(config.variant)) {
    const GroupOperator op = config.variant == Variant::kDecrsEp ? GroupOperator::kElementProduct
                                                                 : GroupOperator::kFmModule;
    TrainResult de = train_decrs(data.split, encoder, config.backbone, op, config.dim,
                                 config.train, hook);
    out.de = std::move(de.model);
    out.de_log = std::move(de.log);
  }
  return out;
}

// ---- Evaluation ----

double select_alpha(const PreparedData& data, const FeatureEncoder& encoder, const Model& rs,
                    const Model& de) {
  const ModelScorer rs_scorer(rs, encoder), de_scorer(de, encoder);
  const auto relevant = positives_by_user(data.split.valid, data.split.num_users);
  constexpr int kSteps = 100;
  std::vector<double> totals(kSteps, 0.0);
  std::vector<double> fused(data.split.num_items);
  for (int32_t u = 0; u < data.split.num_users; ++u) {
    if (relevant[u].empty()) continue;
    const auto candidates = candidate_items(data.split, u);
    const auto a = rs_scorer.score_items(u);
    const auto b = de_scorer.score_items(u);
    const double eta = data.drift.users[u].eta;
    for (int s = 0; s < kSteps; ++s) {
      const double alpha = (s + 1) / 10.0;
      const double w = normalize_drift(eta, data.drift.eta_min, data.drift.eta_max, alpha);
      for (int32_t i : candidates) fused[i] = fuse_scores(a[i], b[i], w);
      totals[s] += recall_at_k(rank_scores(u, fused, candidates, 10), relevant[u], 10);
    }
  }
  const auto best = std::max_element(totals.begin(), totals.end()) - totals.begin();
  return (best + 1) / 10.0;
}

std::string report_label(const RunConfig& config, const EvalOptions& options) {
  if (options.calibration_lambda) return "Calibration";
  if (is_decrs(config.variant)) return options.fusion ? "DecRS" : "DecRS (w/o)";
  if (config.variant == Variant::kUnawareness) return "Unawareness";
  return config.backbone == Backbone::kFm ? "FM" : "NFM";
}

EvalOutput evaluate_run(const PreparedData& data, const RunConfig& config, const TrainedRun& run,
                        const EvalOptions& options) {
  if (!options.fusion && !run.de) {
    throw ConfigError("no-fusion evaluation needs a decrs-ep or decrs-fm run");
  }
  if (options.calibration_lambda &&
      !(*options.calibration_lambda >= 0.0 && *options.calibration_lambda <= 1.0)) {
    throw ConfigError("calibration lambda must be in [0, 1]");
  }
  const FeatureEncoder encoder = make_encoder(data, config.variant == Variant::kUnawareness);
  const ModelScorer rs(run.rs, encoder);
  std::optional<ModelScorer> de;
  if (run.de) de.emplace(*run.de, encoder);

  EvalOutput out;
  out.alpha = config.alpha;
  if (config.alpha_auto && run.de) out.alpha = select_alpha(data, encoder, run.rs, *run.de);
  const DriftTable drift = with_alpha(data.drift, out.alpha);

  const auto relevant = positives_by_user(data.split.test, data.split.num_users);
  const auto history = history_distributions(data);
  const int length = std::max(*std::max_element(config.ks.begin(), config.ks.end()),
                              kCalibrationListLength);
  for (int32_t u = 0; u < data.split.num_users; ++u) {
    // Users without a training history have no drift score or C_KL.
    if (relevant[u].empty() || data.split.history[u].empty()) continue;
    const auto candidates = candidate_items(data.split, u);
    if (options.calibration_lambda) {
      const RankedList pool =
          rank_single(rs, u, candidates, std::max(config.calibration_pool, length));
      out.lists.push_back(calibration_rerank(u, pool.items, history[u].p, data.groups,
                                             *options.calibration_lambda, length));
    } else if (de && options.fusion) {
      out.lists.push_back(rank_topk(rs, *de, u, drift.users[u].eta_hat, candidates, length));
    } else if (de) {
      out.lists.push_back(rank_single(*de, u, candidates, length));
    } else {
      out.lists.push_back(rank_single(rs, u, candidates, length));
    }
  }
  std::vector<double> eta(data.split.num_users);
  for (int32_t u = 0; u < data.split.num_users; ++u) eta[u] = drift.users[u].eta;
  out.report = evaluate_lists(report_label(config, options), out.lists, relevant, history, eta,
                              data.groups, config.ks);
  return out;
}

void write_report(const fs::path& dir, const EvalOutput& output, const PreparedData& data,
                  const RunConfig& config) {
  fs::create_directories(dir);
  const EvalReport& r = output.report;
  const auto names = r.metric_names();
  const DriftTable drift = with_alpha(data.drift, output.alpha);
  {
    auto out = fmt::output_file((dir / "metrics.tsv").string());
    out.print("method\t{}\n", fmt::join(names, "\t"));
    out.print("{}", r.label);
    for (const auto& m : names) out.print("\t{:.6f}", r.mean(m));
    out.print("\n");
  }
  {
    auto out = fmt::output_file((dir / "per_user.tsv").string());
    out.print("user_id\teta\teta_hat\t{}\n", fmt::join(names, "\t"));
    std::vector<std::vector<double>> columns;
    for (const auto& m : names) columns.push_back(r.column(m));
    for (size_t n = 0; n < r.users.size(); ++n) {
      const int32_t u = r.users[n].user;
      out.print("{}\t{:.6f}\t{:.6f}", data.user_ids[u], drift.users[u].eta,
                drift.users[u].eta_hat);
      for (const auto& col : columns) out.print("\t{:.6f}", col[n]);
      out.print("\n");
    }
  }
  std::vector<double> eta;
  for (const auto& um : r.users) eta.push_back(um.eta);
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  {
    auto out = fmt::output_file((dir / "drift_buckets.tsv").string());
    out.print("eta_threshold\tusers\t{}\n", fmt::join(names, "\t"));
    std::vector<std::vector<BucketRow>> per_metric;
    for (const auto& m : names) {
      per_metric.push_back(drift_bucket_report(r.column(m), eta, kDriftThresholds));
    }
    for (size_t t = 0; t < std::size(kDriftThresholds); ++t) {
      const BucketRow& first = per_metric.front()[t];
      out.print("{}\t{}", first.threshold, first.count);
      nlohmann::ordered_json row = {{"eta_threshold", first.threshold}, {"users", first.count}};
      for (size_t m = 0; m < names.size(); ++m) {
        const auto& mean = per_metric[m][t].mean;
        if (mean) {
          out.print("\t{:.6f}", *mean);
          row[names[m]] = *mean;
        } else {
          out.print("\tNA");
          row[names[m]] = nullptr;
        }
      }
      out.print("\n");
      buckets.push_back(std::move(row));
    }
  }
  {
    auto out = fmt::output_file((dir / "group_shares.tsv").string());
    out.print("group\thistory\trecommended\n");
    for (int32_t n = 0; n < data.groups.num_groups(); ++n) {
      out.print("{}\t{:.6f}\t{:.6f}\n", data.groups.names()[n], r.history_share[n],
                r.recommended_share[n]);
    }
  }
  write_rankings(dir / "rankings.tsv", output.lists, data.user_ids, data.item_ids);
  write_snapshot(dir / "config.txt", config);

  nlohmann::ordered_json summary;
  summary["method"] = r.label;
  summary["run_id"] = config.run_id();
  summary["alpha"] = output.alpha;
  summary["users"] = r.users.size();
  summary["tie_break"] = std::string(kTieBreak);
  for (const auto& m : names) summary["metrics"][m] = r.mean(m);
  summary["drift_buckets"] = std::move(buckets);
  for (int32_t n = 0; n < data.groups.num_groups(); ++n) {
    summary["group_shares"][data.groups.names()[n]] = {{"history", r.history_share[n]},
                                                      {"recommended", r.recommended_share[n]}};
  }
  const Config snapshot = config.to_config();
  for (const auto& [k, v] : snapshot.entries()) summary["config"][k] = v;
  auto out = fmt::output_file((dir / "summary.json").string());
  out.print("{}\n", summary.dump(2));
}

// ---- Comparison ----

Comparison compare_reports(const fs::path& a, const fs::path& b) {
  const MetricsRow ra = read_metrics(a);
  const MetricsRow rb = read_metrics(b);
  for (const auto& n : ra.names) {
    if (std::find(rb.names.begin(), rb.names.end(), n) == rb.names.end()) {
      throw ConfigError(fmt::format("metric '{}' is missing from {}", n, b.string()));
    }
  }
  for (const auto& n : rb.names) {
    if (std::find(ra.names.begin(), ra.names.end(), n) == ra.names.end()) {
      throw ConfigError(fmt::format("metric '{}' is missing from {}", n, a.string()));
    }
  }
  Comparison c;
  c.label_a = ra.label;
  c.label_b = rb.label;
  for (size_t m = 0; m < ra.names.size(); ++m) {
    const size_t j =
        std::find(rb.names.begin(), rb.names.end(), ra.names[m]) - rb.names.begin();
    const double va = ra.values[m];
    const double vb = rb.values[j];
    c.metrics.push_back(ra.names[m]);
    c.a.push_back(va);
    c.b.push_back(vb);
    c.relative.push_back(va == 0.0 ? std::nan("") : (vb - va) / va);
  }
  return c;
}

std::string format_comparison(const Comparison& c) {
  std::string out = fmt::format("metric\t{}\t{}\timprovement\n", c.label_a, c.label_b);
  for (size_t m = 0; m < c.metrics.size(); ++m) {
    const std::string rel =
        std::isnan(c.relative[m]) ? "NA" : fmt::format("{:+.2f}%", 100.0 * c.relative[m]);
    out += fmt::format("{}\t{:.4f}\t{:.4f}\t{}\n", c.metrics[m], c.a[m], c.b[m], rel);
  }
  return out;
}

// ---- Commands ----

fs::path prepared_dir(const RunConfig& config) { return config.output_dir / "prepared"; }

fs::path checkpoint_dir(const RunConfig& config) {
  return config.output_dir / "checkpoints" / config.run_id();
}

fs::path report_dir(const RunConfig& config, const EvalOptions& options) {
  std::string name = slug(report_label(config, options));
  if (options.calibration_lambda) name += fmt::format("-{}", *options.calibration_lambda);
  return config.output_dir / "reports" / config.run_id() / name;
}

void cmd_synth(const RunConfig& config, const fs::path& out_dir) {
  const SyntheticDataset ds = synthesize_dataset(config.synthetic);
  fs::create_directories(out_dir);
  write_interactions(out_dir / "interactions.tsv", ds.interactions);
  write_item_metadata(out_dir / "items.tsv", ds.interactions.item_ids, ds.item_tags);
  auto out = fmt::output_file((out_dir / "drifting_users.tsv").string());
  out.print("user_id\tdrifting\n");
  for (size_t u = 0; u < ds.drifting.size(); ++u) {
    out.print("{}\t{}\n", ds.interactions.user_ids[u], ds.drifting[u] ? 1 : 0);
  }
}

void cmd_prepare(const RunConfig& config) {
  const PreparedData data = prepare(config);
  const fs::path dir = prepared_dir(config);
  write_prepared(dir, data);
  auto out = fmt::output_file((dir / "manifest.txt").string());
  out.print("format_version = {}\n", kPreparedFormatVersion);
  out.print("data_hash = {}\n", data_hash(config));
  out.print("num_users = {}\nnum_items = {}\nnum_groups = {}\n", data.split.num_users,
            data.split.num_items, data.groups.num_groups());
  out.print("train_rows = {}\nvalid_rows = {}\ntest_rows = {}\n", data.split.train.size(),
            data.split.valid.size(), data.split.test.size());
}

namespace {

PreparedData load_prepared_for(const RunConfig& config) {
  const fs::path dir = prepared_dir(config);
  PreparedData data = read_prepared(dir);
  const Config manifest = Config::load(dir / "manifest.txt");
  if (manifest.get("data_hash") != data_hash(config)) {
    throw ConfigError(fmt::format(
        "{} was prepared with different data settings; run prepare again", dir.string()));
  }
  return data;
}

}  // namespace

void cmd_train(const RunConfig& config) {
  const PreparedData data = load_prepared_for(config);
  const TrainedRun run = train_run(data, config);
  const fs::path dir = checkpoint_dir(config);
  fs::create_directories(dir);
  const auto meta = [&](std::string role, const std::vector<EpochStats>& log) {
    int best = 0;
    double best_recall = -1.0;
    for (const auto& e : log) {
      if (e.valid_recall > best_recall) {
        best_recall = e.valid_recall;
        best = e.epoch;
      }
    }
    return Metadata{{"run_id", config.run_id()},
                    {"role", std::move(role)},
                    {"variant", std::string(to_string(config.variant))},
                    {"best_epoch", fmt::format("{}", best)}};
  };
  save_checkpoint(dir / "rs.ckpt", run.rs, meta("rs", run.rs_log));
  write_log(dir / "rs_log.tsv", run.rs_log);
  if (run.de) {
    save_checkpoint(dir / "de.ckpt", *run.de, meta("de", run.de_log));
    write_log(dir / "de_log.tsv", run.de_log);
  }
  write_snapshot(dir / "config.txt", config);
}

fs::path cmd_evaluate(const RunConfig& config, const EvalOptions& options) {
  const PreparedData data = load_prepared_for(config);
  const fs::path ckpt = checkpoint_dir(config);
  if (!fs::exists(ckpt / "rs.ckpt")) {
    throw ConfigError(fmt::format("no checkpoint in {}; run train first", ckpt.string()));
  }
  TrainedRun run{load_checkpoint(ckpt / "rs.ckpt").model, std::nullopt, {}, {}};
  if (is_decrs(config.variant)) run.de = load_checkpoint(ckpt / "de.ckpt").model;
  const EvalOutput output = evaluate_run(data, config, run, options);
  const fs::path dir = report_dir(config, options);
  write_report(dir, output, data, config);
  return dir;
}

std::string cmd_compare(const fs::path& a, const fs::path& b) {
  return format_comparison(compare_reports(a, b));
}

}  // namespace decrs
