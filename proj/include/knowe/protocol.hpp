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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "knowe/classifier.hpp"
#include "knowe/data.hpp"
#include "knowe/embedding.hpp"
#include "knowe/metrics.hpp"

namespace knowe {

enum class RunMode { kKnowe, kFtBaseline, kJointUpperBound };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& text);  // ConfigError on unknown names

struct RunFlags {
  bool contrastive_base = true;
  bool freeze_embedding = true;
  bool normalize_weights = true;
  bool freeze_classifier = true;
  RunMode mode = RunMode::kKnowe;

  static RunFlags knowe() { return {}; }
  static RunFlags ft_baseline() { return {false, false, false, false, RunMode::kFtBaseline}; }
  static RunFlags joint_upper_bound() { return {true, true, true, true, RunMode::kJointUpperBound}; }

  friend bool operator==(const RunFlags&, const RunFlags&) = default;
};

// Hyperparameters of one run besides the data.
struct TrainingPreset {
  NetShape net;         // input_dim is overwritten from the data
  OptimConfig base;     // base session (embedding + coarse head)
  OptimConfig session;  // each incremental session
  double temperature = 0.5;  // lambda of the normalized head
  double view_sigma = 0.1;
  double contrastive_weight = 1.0;  // multiplies the batch-mean contrastive term
};

TrainingPreset paper_preset();
TrainingPreset desk_preset();
// Throws ConfigError for names other than "paper" and "desk".
TrainingPreset preset_by_name(const std::string& name);

// The small CIFAR-like synthetic layout used by the desk experiments:
// 5 coarse classes of 4 fine classes, 4 sessions of 5-way 5-shot.
struct SyntheticSetup {
  std::size_t coarse = 5;
  std::size_t fine_per_coarse = 4;
  SyntheticParams data{16, 3.0, 2.5, 0.2, 60};
  StreamShape shape;
};

SessionStream make_synthetic_stream(const SyntheticSetup& setup, std::uint64_t seed);

struct Model {
  EmbeddingNet net;
  ClassifierHead head;
  std::vector<int> column_class;  // coarse id for block 0, fine id for later blocks
  std::size_t coarse_count = 0;
};

struct SessionReport {
  std::size_t session = 0;
  std::optional<double> coarse_acc;
  std::optional<double> fine_acc;
  double total_acc = 0.0;
  std::optional<double> now_acc;
  std::size_t coarse_queries = 0;
  std::size_t fine_queries = 0;
  // Square over head columns: row = true column, col = predicted column.
  Mat confusion;
  std::vector<double> block_norms;  // Frobenius norm of each block at evaluation time
};

enum class SessionEvent { kAugmented, kTrained };

// Called after the base session (session 0, kTrained) and around every
// incremental session.
using SessionObserver = std::function<void(const Model&, std::size_t session, SessionEvent)>;

Model run_base_session(const SessionStream& stream, const RunFlags& flags,
                       const TrainingPreset& preset, std::uint64_t seed);

void run_incremental_session(Model& model, const SessionStream& stream, std::size_t session,
                             const RunFlags& flags, const TrainingPreset& preset, std::uint64_t seed,
                             const SessionObserver* observer = nullptr);

// Scores every query at its own granularity against the columns of `model`.
SessionReport evaluate(const Model& model, const QuerySet& queries, std::size_t session);

struct ExperimentSummary {
  double average_accuracy = 0.0;
  std::optional<double> forgetting;
  std::vector<std::optional<double>> fine_forgetting;    // index t, defined for t >= 2
  std::vector<std::optional<double>> coarse_forgetting;  // index t, defined for 1 <= t <= T-1
  MetricSeries series;
};

struct ExperimentResult {
  std::vector<SessionReport> reports;  // sessions 0..T
  ExperimentSummary summary;
  Model model;
};

ExperimentSummary summarize(const std::vector<SessionReport>& reports, const SessionStream& stream);

ExperimentResult run_experiment(const SessionStream& stream, const RunFlags& flags,
                                const TrainingPreset& preset, std::uint64_t seed,
                                const SessionObserver& observer = {});

}  // namespace knowe
