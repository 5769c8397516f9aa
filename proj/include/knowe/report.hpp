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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "knowe/analysis.hpp"
#include "knowe/protocol.hpp"

namespace knowe {

// Writes `content` to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// Shortest text that reads back to the same double. Empty for a missing value.
std::string format_number(std::optional<double> value);

// t,A_c,A_f,A_t,now_acc
std::string sessions_csv(std::span<const SessionReport> reports);
// A_bar, F, per-session F_f/F_c, seed and flags.
std::string summary_json(const ExperimentResult& result, const RunFlags& flags, std::uint64_t seed);
// Square confusion over head columns with a column-label header.
std::string confusion_csv(const SessionReport& report, std::span<const int> column_class,
                          std::size_t coarse_count);
// t,block,norm
std::string norms_csv(std::span<const SessionReport> reports);

// seed,normalize,freeze_classifier,freeze_embedding,A_bar,F
std::string ablation_csv(const AblationReport& report);
std::string conjectures_json(const AblationReport& report);

// variant,normalize,freeze_classifier,median_D,seeds,skipped
std::string stability_csv(const OrderingReport& report);
// One summary row of the plasticity sweep.
std::string plasticity_csv(const PlasticitySweep& sweep, double lr);
// seed,t,norm,outlier,growth_fraction
std::string norm_trace_csv(const GrowthReport& report, std::span<const std::uint64_t> seeds);
std::string analysis_json(const OrderingReport& stability, const PlasticitySweep& plasticity,
                          const GrowthReport& growth);

}  // namespace knowe
