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

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "decrs/backdoor.hpp"

namespace decrs {

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct LoadedCheckpoint {
  Model model;
  Metadata metadata;
};

// Text header (model kind, shapes, d-bar, free-form metadata) terminated by a
// "data" line, then every declared block as 32-bit little-endian floats.
// Parameters are rounded to float on save; a loaded model saves back to the
// identical bytes.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Metadata& metadata = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace decrs
