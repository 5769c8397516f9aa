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
#include <optional>
#include <span>
#include <vector>

namespace knowe {

// Per-session accuracies (fractions) of one experiment.
struct MetricSeries {
  std::vector<double> total;                  // A_t, sessions 0..T
  std::vector<std::optional<double>> coarse;  // A_c, sessions 0..T (absent when no coarse queries)
  std::vector<std::optional<double>> fine;    // A_f, sessions 0..T (absent at 0)
  std::vector<std::size_t> seen_fine;         // c_t, sessions 0..T
  std::size_t fine_total = 0;                 // N_f

  std::size_t sessions() const { return total.empty() ? 0 : total.size() - 1; }
};

// Mean of A_t over sessions 0..T. Empty input raises ConfigError.
double average_accuracy(std::span<const double> totals);

// (prev - now) / prev; zero prev raises UndefinedMetric.
double fine_forgetting(double previous, double current);

// (base - now) / base; zero base raises UndefinedMetric.
double coarse_forgetting(double base, double current);

// Overall forgetting F for T >= 2:
//   1/(T-1) * ( sum_{t=2..T} F_f^t * c_t/N_f + sum_{t=1..T-1} F_c^t * (1 - c_t/N_f) ),
// each weight taken at its own summand's t. Missing or undefined components
// raise UndefinedMetric; T < 2 raises ConfigError.
double overall_forgetting(const MetricSeries& series);

}  // namespace knowe
