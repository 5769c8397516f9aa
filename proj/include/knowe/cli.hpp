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

#include <filesystem>
#include <optional>

#include "knowe/config.hpp"

namespace knowe {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

// Each command writes its files under config.out and throws on failure.

// sessions.csv, summary.json, confusion_t{t}.csv, norms.csv, model.knwe
void cmd_run(const RunConfig& config);
// ablation.csv, conjectures.json
void cmd_ablate(const RunConfig& config);
// stability.csv, plasticity.csv, norm_trace.csv, analysis.json
void cmd_analyze(const RunConfig& config);
// dataset.csv with the synthetic samples for config.seed
void cmd_gen_data(const RunConfig& config);
// features.csv: embedding of `input` (or of the configured dataset) through a checkpoint
void cmd_export_features(const RunConfig& config, const std::filesystem::path& checkpoint,
                         const std::optional<std::filesystem::path>& input);

// Parses argv, dispatches and maps failures to exit codes. Messages go to stderr.
int run_cli(int argc, char** argv);

}  // namespace knowe
