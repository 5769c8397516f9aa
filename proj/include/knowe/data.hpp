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
#include <utility>
#include <vector>

#include "knowe/numerics.hpp"

namespace knowe {

// Coarse -> fine label tree. Fine ids partition 0..fine_count()-1.
struct Hierarchy {
  std::vector<std::vector<int>> children;  // indexed by coarse id
  std::vector<int> parent;                 // indexed by fine id

  std::size_t coarse_count() const { return children.size(); }
  std::size_t fine_count() const { return parent.size(); }

  friend bool operator==(const Hierarchy&, const Hierarchy&) = default;
};

// Throws ConfigError unless r >= 2 and fine_per_coarse >= 2.
Hierarchy build_hierarchy(std::size_t r, std::size_t fine_per_coarse);

// Builds a hierarchy from explicit parent links and validates the partition.
Hierarchy hierarchy_from_parents(std::vector<int> parent, std::size_t coarse_count);

struct LabeledDataset {
  Mat features;  // one sample per row
  std::vector<int> coarse;
  std::vector<int> fine;

  std::size_t size() const { return features.rows(); }
  std::size_t input_dim() const { return features.cols(); }
  void add(std::span<const double> x, int coarse_id, int fine_id);

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct SyntheticParams {
  std::size_t input_dim = 16;
  double coarse_sep = 10.0;
  double fine_sep = 2.0;
  double noise_sigma = 0.3;
  std::size_t n_per_fine = 50;
};

// Hierarchical Gaussian mixture: coarse centers pairwise >= coarse_sep apart,
// fine centers at distance fine_sep from their coarse center, isotropic noise.
LabeledDataset generate_synthetic(const Hierarchy& h, const SyntheticParams& params,
                                  std::uint64_t seed);

// Same as generate_synthetic but also returns the fine centers (row = fine id).
std::pair<LabeledDataset, Mat> generate_synthetic_with_centers(const Hierarchy& h,
                                                               const SyntheticParams& params,
                                                               std::uint64_t seed);

// CSV: header `coarse_id,fine_id,f0,...,f{D-1}`, one sample per row.
std::pair<Hierarchy, LabeledDataset> load_feature_file(const std::filesystem::path& path);
void export_feature_file(const LabeledDataset& ds, const std::filesystem::path& path);

enum class Granularity : std::uint8_t { kCoarse, kFine };

struct QuerySet {
  Mat features;
  std::vector<int> coarse;
  std::vector<int> fine;
  std::vector<Granularity> level;

  std::size_t size() const { return features.rows(); }
  void add(std::span<const double> x, int coarse_id, int fine_id, Granularity g);
};

// Support/query stream for the coarse-to-fine protocol. Session t (1-based)
// introduces session_classes[t-1] with supports[t-1]; queries[t] evaluates the
// model after session t and queries[0] is the coarse-only base query.
struct SessionStream {
  Hierarchy hierarchy;
  std::size_t way = 0;    // C
  std::size_t shots = 0;  // K
  std::size_t queries_per_class = 0;  // H
  std::size_t sessions = 0;  // T

  LabeledDataset base_train;
  std::vector<std::vector<int>> session_classes;
  std::vector<LabeledDataset> supports;
  std::vector<QuerySet> queries;
  LabeledDataset probes;  // held out of base_train

  // Fine classes introduced in sessions 1..t.
  std::size_t seen_fine(std::size_t t) const { return way * t; }
};

struct StreamShape {
  std::size_t way = 5;
  std::size_t shots = 5;
  std::size_t queries_per_class = 15;
  std::size_t sessions = 4;
  std::size_t probe_count = 32;
};

SessionStream make_session_stream(const LabeledDataset& ds, const Hierarchy& h,
                                  const StreamShape& shape, std::uint64_t seed);

}  // namespace knowe
