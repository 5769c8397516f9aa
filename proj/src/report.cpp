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

#include "knowe/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "knowe/errors.hpp"

namespace knowe {
namespace {

using ojson = nlohmann::ordered_json;

ojson number_or_null(std::optional<double> v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson flags_json(const RunFlags& f) {
  ojson j;
  j["contrastive_base"] = f.contrastive_base;
  j["freeze_embedding"] = f.freeze_embedding;
  j["normalize_weights"] = f.normalize_weights;
  j["freeze_classifier"] = f.freeze_classifier;
  j["mode"] = to_string(f.mode);
  return j;
}

const char* yes_no(bool b) { return b ? "1" : "0"; }

std::string column_label(std::size_t col, std::span<const int> column_class, std::size_t coarse_count) {
  const char prefix = col < coarse_count ? 'c' : 'f';
  return prefix + std::to_string(column_class[col]);
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string format_number(std::optional<double> value) {
  if (!value) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, *value);
  return std::string(buf, res.ptr);
}

std::string sessions_csv(std::span<const SessionReport> reports) {
  std::ostringstream out;
  out << "t,A_c,A_f,A_t,now_acc\n";
  for (const SessionReport& r : reports) {
    out << r.session << ',' << format_number(r.coarse_acc) << ',' << format_number(r.fine_acc) << ','
        << format_number(r.total_acc) << ',' << format_number(r.now_acc) << '\n';
  }
  return out.str();
}

std::string summary_json(const ExperimentResult& result, const RunFlags& flags, std::uint64_t seed) {
  const ExperimentSummary& s = result.summary;
  ojson j;
  j["seed"] = seed;
  j["flags"] = flags_json(flags);
  j["A_bar"] = s.average_accuracy;
  j["F"] = number_or_null(s.forgetting);
  ojson sessions = ojson::array();
  for (const SessionReport& r : result.reports) {
    const std::size_t t = r.session;
    ojson row;
    row["t"] = t;
    row["A_c"] = number_or_null(r.coarse_acc);
    row["A_f"] = number_or_null(r.fine_acc);
    row["A_t"] = r.total_acc;
    row["now_acc"] = number_or_null(r.now_acc);
    row["F_f"] = number_or_null(t < s.fine_forgetting.size() ? s.fine_forgetting[t] : std::nullopt);
    row["F_c"] = number_or_null(t < s.coarse_forgetting.size() ? s.coarse_forgetting[t] : std::nullopt);
    sessions.push_back(std::move(row));
  }
  j["sessions"] = std::move(sessions);
  return j.dump(2) + "\n";
}

std::string confusion_csv(const SessionReport& report, std::span<const int> column_class,
                          std::size_t coarse_count) {
  const Mat& m = report.confusion;
  if (m.rows() != column_class.size() || m.cols() != column_class.size()) {
    throw ShapeError("confusion_csv: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " matrix for " + std::to_string(column_class.size()) + " columns");
  }
  std::ostringstream out;
  out << "true";
  for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << column_label(c, column_class, coarse_count);
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << column_label(r, column_class, coarse_count);
    for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << format_number(m(r, c));
    out << '\n';
  }
  return out.str();
}

std::string norms_csv(std::span<const SessionReport> reports) {
  std::ostringstream out;
  out << "t,block,norm\n";
  for (const SessionReport& r : reports) {
    for (std::size_t b = 0; b < r.block_norms.size(); ++b) {
      out << r.session << ',' << b << ',' << format_number(r.block_norms[b]) << '\n';
    }
  }
  return out.str();
}

std::string ablation_csv(const AblationReport& report) {
  std::ostringstream out;
  out << "seed,normalize,freeze_classifier,freeze_embedding,A_bar,F\n";
  for (const AblationCell& c : report.cells) {
    out << c.seed << ',' << yes_no(c.normalize) << ',' << yes_no(c.freeze_classifier) << ','
        << yes_no(c.freeze_embedding) << ',' << format_number(c.average_accuracy) << ','
        << format_number(c.forgetting) << '\n';
  }
  return out.str();
}

std::string conjectures_json(const AblationReport& report) {
  ojson j;
  j["epsilon"] = report.epsilon;
  ojson rows = ojson::array();
  for (const TruthRow& r : report.rows) {
    ojson row;
    row["p"] = r.p;
    row["q"] = r.q;
    row["delta_points"] = r.delta_points;
    row["r"] = r.r;
    rows.push_back(std::move(row));
  }
  j["truth_table"] = std::move(rows);
  j["c2"] = report.neither_implies_r;
  j["c3"] = report.biconditional;
  j["c4"] = report.either_implies_not_r;
  j["biconditional"] = report.biconditional;
  return j.dump(2) + "\n";
}

std::string stability_csv(const OrderingReport& report) {
  std::ostringstream out;
  out << "variant,normalize,freeze_classifier,median_D,seeds,skipped\n";
  for (const VariantDecay& v : report.variants) {
    out << v.name << ',' << yes_no(v.flags.normalize_weights) << ',' << yes_no(v.flags.freeze_classifier)
        << ',' << format_number(v.median) << ',' << v.seed_median.size() << ',' << v.skipped << '\n';
  }
  return out.str();
}

std::string plasticity_csv(const PlasticitySweep& sweep, double lr) {
  const std::size_t active = sweep.trials - sweep.stationary;
  const double descent = active == 0 ? 0.0 : static_cast<double>(sweep.decreased) / active;
  const double positive = sweep.trials == 0 ? 0.0 : static_cast<double>(sweep.positive_inner) / sweep.trials;
  std::ostringstream out;
  out << "lr,trials,stationary,decreased,descent_fraction,positive_inner_fraction,min_inner\n";
  out << format_number(lr) << ',' << sweep.trials << ',' << sweep.stationary << ',' << sweep.decreased
      << ',' << format_number(descent) << ',' << format_number(positive) << ','
      << format_number(sweep.min_inner) << '\n';
  return out.str();
}

std::string norm_trace_csv(const GrowthReport& report, std::span<const std::uint64_t> seeds) {
  if (seeds.size() != report.traces.size()) {
    throw ShapeError("norm_trace_csv: " + std::to_string(report.traces.size()) + " traces for " +
                     std::to_string(seeds.size()) + " seeds");
  }
  std::ostringstream out;
  out << "seed,t,norm,outlier,growth_fraction\n";
  const std::string pooled = format_number(report.growth_fraction());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const NormTrace& tr = report.traces[s];
    for (std::size_t i = 0; i < tr.norms.size(); ++i) {
      out << seeds[s] << ',' << i + 1 << ',' << format_number(tr.norms[i]) << ','
          << yes_no(tr.outlier[i]) << ',' << pooled << '\n';
    }
  }
  return out.str();
}

std::string analysis_json(const OrderingReport& stability, const PlasticitySweep& plasticity,
                          const GrowthReport& growth) {
  ojson j;
  ojson st;
  st["t"] = stability.t;
  st["T"] = stability.T;
  ojson medians;
  for (const VariantDecay& v : stability.variants) medians[v.name] = v.median;
  st["median_D"] = std::move(medians);
  st["ordered_fraction"] = stability.ordered_fraction;
  st["chain_holds"] = stability.chain_holds;
  j["stability"] = std::move(st);

  ojson pl;
  pl["trials"] = plasticity.trials;
  pl["stationary"] = plasticity.stationary;
  pl["decreased"] = plasticity.decreased;
  pl["positive_inner"] = plasticity.positive_inner;
  pl["min_inner"] = plasticity.min_inner;
  j["plasticity"] = std::move(pl);

  ojson gr;
  gr["pairs"] = growth.pairs;
  gr["growing"] = growth.growing;
  gr["growth_fraction"] = growth.growth_fraction();
  j["weight_growth"] = std::move(gr);
  return j.dump(2) + "\n";
}

}  // namespace knowe
