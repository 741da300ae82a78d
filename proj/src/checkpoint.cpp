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

#include "decrs/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "decrs/error.hpp"

namespace decrs {
namespace {

constexpr const char* kMagic = "decrs-checkpoint 1";

struct Block {
  std::string name;
  std::vector<size_t> shape;
};

size_t count(const Block& b) {
  size_t n = 1;
  for (size_t s : b.shape) n *= s;
  return n;
}

void write_floats(std::ostream& out, const std::vector<double>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (size_t i = 0; i < values.size(); ++i) {
    uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(values[i]));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(bytes.data() + 4 * i, &bits, 4);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_floats(std::istream& in, size_t n, const std::string& name) {
  std::string bytes(n * 4, '\0');
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw ParseError(fmt::format("checkpoint block '{}' is truncated", name));
  }
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Metadata& metadata) {
  const FmParams& p = model.params;
  const auto dim = static_cast<size_t>(p.dim);
  const auto nf = static_cast<size_t>(p.num_features);
  std::vector<std::pair<Block, const std::vector<double>*>> blocks;
  const std::vector<double> w0{p.w0};
  blocks.push_back({{"w0", {1}}, &w0});
  blocks.push_back({{"w", {nf}}, &p.w});
  blocks.push_back({{"emb", {nf, dim}}, &p.emb});
  if (model.backbone == Backbone::kNfm) {
    blocks.push_back({{"w1", {dim, dim}}, &p.w1});
    blocks.push_back({{"b1", {dim}}, &p.b1});
    blocks.push_back({{"h", {dim}}, &p.h});
  }
  if (model.backdoor) {
    blocks.push_back({{"v", {model.backdoor->dbar.size(), dim}}, &model.backdoor->v});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write checkpoint {}", path.string()));
  out << kMagic << '\n';
  out << "backbone " << (model.backbone == Backbone::kFm ? "fm" : "nfm") << '\n';
  out << "dim " << p.dim << '\n';
  out << "num_features " << p.num_features << '\n';
  if (model.backdoor) {
    out << "operator " << to_string(model.backdoor->op) << '\n';
    out << fmt::format("dbar {}\n", fmt::join(model.backdoor->dbar, " "));
  }
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument(fmt::format("checkpoint metadata '{}' is not single-line", k));
    }
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [b, values] : blocks) {
    if (values->size() != count(b)) {
      throw std::logic_error(fmt::format("checkpoint block '{}' has {} values, shape says {}",
                                         b.name, values->size(), count(b)));
    }
    out << "block " << b.name << " f32le " << fmt::format("{}", fmt::join(b.shape, " ")) << '\n';
  }
  out << "data\n";
  for (const auto& [b, values] : blocks) write_floats(out, *values);
  if (!out) throw ConfigError(fmt::format("failed writing checkpoint {}", path.string()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(fmt::format("checkpoint not found: {}", path.string()));
  }
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw ParseError(fmt::format("{}: not a checkpoint file", path.string()));
  }
  LoadedCheckpoint ck;
  Model& m = ck.model;
  std::vector<Block> blocks;
  bool has_data = false;
  std::string op_name;
  std::vector<double> dbar;
  while (std::getline(in, line)) {
    if (line == "data") {
      has_data = true;
      break;
    }
    std::istringstream row(line);
    std::string key;
    row >> key;
    if (key == "backbone") {
      std::string b;
      row >> b;
      if (b != "fm" && b != "nfm") throw ParseError(fmt::format("unknown backbone '{}'", b));
      m.backbone = b == "fm" ? Backbone::kFm : Backbone::kNfm;
    } else if (key == "dim") {
      row >> m.params.dim;
    } else if (key == "num_features") {
      row >> m.params.num_features;
    } else if (key == "operator") {
      row >> op_name;
    } else if (key == "dbar") {
      double x;
      while (row >> x) dbar.push_back(x);
    } else if (key == "meta") {
      std::string k, v;
      row >> k;
      std::getline(row >> std::ws, v);
      ck.metadata.emplace_back(k, v);
    } else if (key == "block") {
      Block b;
      std::string dtype;
      row >> b.name >> dtype;
      if (dtype != "f32le") throw ParseError(fmt::format("unsupported dtype '{}'", dtype));
      size_t s;
      while (row >> s) b.shape.push_back(s);
      blocks.push_back(std::move(b));
    } else {
      throw ParseError(fmt::format("{}: unknown header line '{}'", path.string(), line));
    }
  }
  if (!has_data) throw ParseError(fmt::format("{}: missing data section", path.string()));

  FmParams& p = m.params;
  if (!op_name.empty()) {
    m.backdoor = Backdoor{};
    m.backdoor->op = parse_group_operator(op_name);
    m.backdoor->dbar = std::move(dbar);
  }
  for (const Block& b : blocks) {
    auto values = read_floats(in, count(b), b.name);
    if (b.name == "w0") {
      p.w0 = values.at(0);
    } else if (b.name == "w") {
      p.w = std::move(values);
    } else if (b.name == "emb") {
      p.emb = std::move(values);
    } else if (b.name == "w1") {
      p.w1 = std::move(values);
    } else if (b.name == "b1") {
      p.b1 = std::move(values);
    } else if (b.name == "h") {
      p.h = std::move(values);
    } else if (b.name == "v" && m.backdoor) {
      m.backdoor->v = std::move(values);
    } else {
      throw ParseError(fmt::format("{}: unexpected block '{}'", path.string(), b.name));
    }
  }
  const auto dim = static_cast<size_t>(p.dim);
  if (p.w.size() != static_cast<size_t>(p.num_features) || p.emb.size() != p.w.size() * dim ||
      (m.backbone == Backbone::kNfm && (p.w1.size() != dim * dim || p.h.size() != dim)) ||
      (m.backdoor && m.backdoor->v.size() != m.backdoor->dbar.size() * dim)) {
    throw ParseError(fmt::format("{}: block shapes disagree with the header", path.string()));
  }
  return ck;
}

}  // namespace decrs
