// Copyright (c) 2026, The PSIS Toolkit Authors. All rights reserved.
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
#include <iosfwd>
#include <map>
#include <string>

#include "psis/progressive.hpp"

namespace psis {

/// Everything a CLI run depends on. Parameters come from defaults, then the
/// config file, then command-line flags (later sources win).
struct RunConfig {
  PipelineConfig pipeline;
  std::filesystem::path annotations;
  std::filesystem::path images;
  std::filesystem::path out;
  std::filesystem::path ap_dir;
  std::filesystem::path ap_report;
  std::filesystem::path candidates;

  /// Applies one `key = value` setting. Throws ConfigError for unknown keys
  /// and malformed values.
  void set(const std::string& key, const std::string& value);

  /// Reads `key = value` lines; blank lines and `#` comments are skipped.
  void load_file(const std::filesystem::path& path);
  void load_text(std::istream& in, const std::string& origin);

  /// Module invariants; throws ConfigError.
  void validate() const;

  /// Sorted `key=value` lines of every result-affecting parameter. Paths and
  /// the job count are left out.
  std::string canonical() const;
  /// FNV-1a of canonical().
  std::string hash() const;
};

/// Keys accepted by RunConfig::set, in canonical order.
const std::vector<std::string>& config_keys();

}  // namespace psis
