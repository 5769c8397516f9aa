/* Copyright 2026 The Knowe Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "knowe/protocol.hpp"

namespace knowe {

struct DatasetSpec {
  // When set, samples come from this CSV instead of the synthetic generator.
  std::optional<std::filesystem::path> feature_file;
  std::size_t coarse = 5;
  std::size_t fine_per_coarse = 4;
  SyntheticParams synthetic{16, 3.0, 2.5, 0.2, 60};
};

struct AnalysisSpec {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double epsilon = 1.0;  // accuracy points
  std::size_t plasticity_trials = 100;
  double plasticity_lr = 1e-3;
  std::size_t stability_t = 1;
};

struct RunConfig {
  std::string preset = "desk";
  DatasetSpec dataset;
  StreamShape stream;
  RunFlags flags;
  TrainingPreset training = desk_preset();  // preset values with file overrides applied
  AnalysisSpec analysis;
  std::uint64_t seed = 1;
  std::filesystem::path out = "knowe_out";
};

// Overrides given on the command line. Each one wins over the file.
struct ConfigOverrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> flags;  // "normalize_weights=false,mode=ft_baseline"
};

// Parses and validates a JSON config. `origin` names the source in messages,
// which read "<origin>:<line>: <problem>". Unknown keys, wrong types and out of
// range values all raise ConfigError.
RunConfig parse_config(const std::string& text, const std::string& origin,
                       const ConfigOverrides& overrides = {});

RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

// Config from preset defaults and overrides only.
RunConfig default_config(const ConfigOverrides& overrides = {});

// Applies "key=value,key=value" to `flags`. Keys are the RunFlags field names.
void apply_flag_overrides(RunFlags& flags, const std::string& csv);

// Stream for `seed` as described by the dataset and stream sections.
SessionStream build_stream(const RunConfig& config, std::uint64_t seed);

}  // namespace knowe
