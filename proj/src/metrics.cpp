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

#include "knowe/metrics.hpp"

#include <string>

#include "knowe/errors.hpp"

namespace knowe {

double average_accuracy(std::span<const double> totals) {
  if (totals.empty()) throw ConfigError("average_accuracy: empty series");
  double sum = 0.0;
  for (double a : totals) sum += a;
  return sum / static_cast<double>(totals.size());
}

double fine_forgetting(double previous, double current) {
  if (previous == 0.0) throw UndefinedMetric("fine forgetting: previous fine accuracy is zero");
  return (previous - current) / previous;
}

double coarse_forgetting(double base, double current) {
  if (base == 0.0) throw UndefinedMetric("coarse forgetting: base coarse accuracy is zero");
  return (base - current) / base;
}

double overall_forgetting(const MetricSeries& s) {
  const std::size_t T = s.sessions();
  if (T < 2) throw ConfigError("overall_forgetting: needs at least two incremental sessions");
  if (s.fine_total == 0) throw ConfigError("overall_forgetting: N_f is zero");
  if (s.coarse.size() != T + 1 || s.fine.size() != T + 1 || s.seen_fine.size() != T + 1) {
    throw ConfigError("overall_forgetting: series lengths disagree");
  }
  const double nf = static_cast<double>(s.fine_total);
  auto need = [](const std::optional<double>& v, const char* what, std::size_t t) {
    if (!v) throw UndefinedMetric(std::string(what) + " missing at session " + std::to_string(t));
    return *v;
  };
  double sum = 0.0;
  for (std::size_t t = 2; t <= T; ++t) {
    const double ff = fine_forgetting(need(s.fine[t - 1], "A_f", t - 1), need(s.fine[t], "A_f", t));
    sum += ff * static_cast<double>(s.seen_fine[t]) / nf;
  }
  const double base = need(s.coarse[0], "A_c", 0);
  for (std::size_t t = 1; t + 1 <= T; ++t) {
    const double fc = coarse_forgetting(base, need(s.coarse[t], "A_c", t));
    sum += fc * (1.0 - static_cast<double>(s.seen_fine[t]) / nf);
  }
  return sum / static_cast<double>(T - 1);
}

}  // namespace knowe
