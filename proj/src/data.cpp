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

#include "knowe/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "knowe/rng.hpp"

namespace knowe {

Hierarchy build_hierarchy(std::size_t r, std::size_t fine_per_coarse) {
  if (r < 2 || fine_per_coarse < 2) {
    throw ConfigError("build_hierarchy: need at least 2 coarse classes and 2 fine classes per coarse class");
  }
  Hierarchy h;
  h.children.resize(r);
  for (std::size_t c = 0; c < r; ++c) {
    for (std::size_t k = 0; k < fine_per_coarse; ++k) {
      const int fine = static_cast<int>(c * fine_per_coarse + k);
      h.children[c].push_back(fine);
      h.parent.push_back(static_cast<int>(c));
    }
  }
  return h;
}

Hierarchy hierarchy_from_parents(std::vector<int> parent, std::size_t coarse_count) {
  Hierarchy h;
  h.children.resize(coarse_count);
  for (std::size_t f = 0; f < parent.size(); ++f) {
    const int p = parent[f];
    if (p < 0 || static_cast<std::size_t>(p) >= coarse_count) {
      throw ConfigError("hierarchy: fine class " + std::to_string(f) + " has an invalid parent");
    }
    h.children[static_cast<std::size_t>(p)].push_back(static_cast<int>(f));
  }
  for (std::size_t c = 0; c < coarse_count; ++c) {
    if (h.children[c].empty()) {
      throw ConfigError("hierarchy: coarse class " + std::to_string(c) + " has no fine classes");
    }
  }
  h.parent = std::move(parent);
  return h;
}

void LabeledDataset::add(std::span<const double> x, int coarse_id, int fine_id) {
  features.append_row(x);
  coarse.push_back(coarse_id);
  fine.push_back(fine_id);
}

void QuerySet::add(std::span<const double> x, int coarse_id, int fine_id, Granularity g) {
  features.append_row(x);
  coarse.push_back(coarse_id);
  fine.push_back(fine_id);
  level.push_back(g);
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

constexpr int kCenterRetries = 10000;

Vec random_direction(Rng& rng, std::size_t dim) {
  Vec v(dim);
  double n = 0.0;
  while (n < 1e-12) {
    for (double& x : v) x = rng.normal();
    n = norm2(v);
  }
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

std::pair<LabeledDataset, Mat> generate_synthetic_with_centers(const Hierarchy& h,
                                                               const SyntheticParams& p,
                                                               std::uint64_t seed) {
  if (!(p.coarse_sep > p.fine_sep && p.fine_sep > p.noise_sigma && p.noise_sigma >= 0.0)) {
    throw ConfigError("generate_synthetic: need coarse_sep > fine_sep > noise_sigma >= 0");
  }
  if (p.input_dim == 0 || p.n_per_fine == 0) throw ConfigError("generate_synthetic: empty shape");

  Rng center_rng = Rng(seed).fork("data/centers");
  Rng noise_rng = Rng(seed).fork("data/noise");
  const std::size_t dim = p.input_dim;

  // Coarse centers are drawn uniformly in a cube and rejection-sampled until
  // every pair is at least coarse_sep apart.
  const double side = p.coarse_sep * std::max(1.0, std::cbrt(static_cast<double>(h.coarse_count())));
  Mat coarse_centers(h.coarse_count(), dim);
  for (std::size_t c = 0; c < h.coarse_count(); ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kCenterRetries && !placed; ++attempt) {
      auto row = coarse_centers.row(c);
      for (double& x : row) x = side * (2.0 * center_rng.uniform() - 1.0);
      placed = true;
      for (std::size_t o = 0; o < c && placed; ++o) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
          const double diff = row[i] - coarse_centers(o, i);
          d2 += diff * diff;
        }
        placed = std::sqrt(d2) >= p.coarse_sep;
      }
    }
    if (!placed) {
      throw GenError("generate_synthetic: could not place coarse center " + std::to_string(c) +
                     " at separation " + std::to_string(p.coarse_sep) + " in dimension " +
                     std::to_string(dim));
    }
  }

  Mat fine_centers(h.fine_count(), dim);
  for (std::size_t f = 0; f < h.fine_count(); ++f) {
    const Vec dir = random_direction(center_rng, dim);
    const auto parent = coarse_centers.row(static_cast<std::size_t>(h.parent[f]));
    for (std::size_t i = 0; i < dim; ++i) fine_centers(f, i) = parent[i] + p.fine_sep * dir[i];
  }

  LabeledDataset ds;
  ds.features = Mat(0, 0);
  Vec x(dim);
  for (std::size_t f = 0; f < h.fine_count(); ++f) {
    for (std::size_t s = 0; s < p.n_per_fine; ++s) {
      for (std::size_t i = 0; i < dim; ++i) x[i] = fine_centers(f, i) + p.noise_sigma * noise_rng.normal();
      ds.add(x, h.parent[f], static_cast<int>(f));
    }
  }
  return {std::move(ds), std::move(fine_centers)};
}

LabeledDataset generate_synthetic(const Hierarchy& h, const SyntheticParams& params,
                                  std::uint64_t seed) {
  return generate_synthetic_with_centers(h, params, seed).first;
}

// ---------------------------------------------------------------------------
// Feature files

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_field(std::string_view text, std::size_t line_no, const char* what) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" +
                      std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::pair<Hierarchy, LabeledDataset> load_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open feature file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw EmptyError("feature file has no header: " + path.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_commas(trim(line));
  if (header.size() < 3 || trim(header[0]) != "coarse_id" || trim(header[1]) != "fine_id") {
    throw FormatError("line 1: header must be coarse_id,fine_id,f0,...");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t i = 0; i < dim; ++i) {
    if (trim(header[i + 2]) != "f" + std::to_string(i)) {
      throw FormatError("line 1: expected column f" + std::to_string(i));
    }
  }

  std::vector<long long> raw_coarse;
  std::vector<long long> raw_fine;
  Mat features;
  Vec x(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_commas(body);
    if (fields.size() != dim + 2) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) +
                        " fields, got " + std::to_string(fields.size()));
    }
    const auto c = parse_field<long long>(fields[0], line_no, "coarse_id");
    const auto f = parse_field<long long>(fields[1], line_no, "fine_id");
    if (c < 0 || f < 0) throw FormatError("line " + std::to_string(line_no) + ": negative id");
    for (std::size_t i = 0; i < dim; ++i) x[i] = parse_field<double>(fields[i + 2], line_no, "feature");
    require_finite(x, "load_feature_file");
    raw_coarse.push_back(c);
    raw_fine.push_back(f);
    features.append_row(x);
  }
  if (raw_coarse.empty()) throw EmptyError("feature file has no samples: " + path.string());

  std::map<long long, int> coarse_index;
  std::map<long long, int> fine_index;
  std::map<long long, long long> fine_parent;
  for (std::size_t n = 0; n < raw_coarse.size(); ++n) {
    coarse_index.emplace(raw_coarse[n], 0);
    fine_index.emplace(raw_fine[n], 0);
    const auto [it, inserted] = fine_parent.emplace(raw_fine[n], raw_coarse[n]);
    if (!inserted && it->second != raw_coarse[n]) {
      throw FormatError("fine_id " + std::to_string(raw_fine[n]) + " appears under coarse ids " +
                        std::to_string(it->second) + " and " + std::to_string(raw_coarse[n]));
    }
  }
  int next = 0;
  for (auto& [id, idx] : coarse_index) idx = next++;
  next = 0;
  for (auto& [id, idx] : fine_index) idx = next++;

  std::vector<int> parent(fine_index.size());
  for (const auto& [fine, coarse] : fine_parent) parent[fine_index[fine]] = coarse_index[coarse];
  Hierarchy h = hierarchy_from_parents(std::move(parent), coarse_index.size());

  LabeledDataset ds;
  ds.features = std::move(features);
  for (std::size_t n = 0; n < raw_coarse.size(); ++n) {
    ds.coarse.push_back(coarse_index[raw_coarse[n]]);
    ds.fine.push_back(fine_index[raw_fine[n]]);
  }
  return {std::move(h), std::move(ds)};
}

void export_feature_file(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write feature file " + path.string());
  out << "coarse_id,fine_id";
  for (std::size_t i = 0; i < ds.input_dim(); ++i) out << ",f" << i;
  out << '\n';
  char buf[40];
  for (std::size_t n = 0; n < ds.size(); ++n) {
    out << ds.coarse[n] << ',' << ds.fine[n];
    for (double v : ds.features.row(n)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw FormatError("failed writing feature file " + path.string());
}

// ---------------------------------------------------------------------------
// Session streams

SessionStream make_session_stream(const LabeledDataset& ds, const Hierarchy& h,
                                  const StreamShape& shape, std::uint64_t seed) {
  const std::size_t nf = h.fine_count();
  if (shape.way == 0 || shape.shots == 0 || shape.queries_per_class == 0) {
    throw ConfigError("make_session_stream: C, K and H must be positive");
  }
  if (shape.way * shape.sessions > nf) {
    throw ConfigError("make_session_stream: T*C = " + std::to_string(shape.way * shape.sessions) +
                      " exceeds the " + std::to_string(nf) + " fine classes");
  }

  std::vector<std::vector<std::size_t>> by_fine(nf);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const int f = ds.fine[n];
    if (f < 0 || static_cast<std::size_t>(f) >= nf || h.parent[static_cast<std::size_t>(f)] != ds.coarse[n]) {
      throw ConfigError("make_session_stream: sample " + std::to_string(n) + " has labels outside the hierarchy");
    }
    by_fine[static_cast<std::size_t>(f)].push_back(n);
  }

  const Rng root(seed);
  Rng order_rng = root.fork("stream/order");
  Rng split_rng = root.fork("stream/split");
  Rng probe_rng = root.fork("stream/probes");

  std::vector<int> order(nf);
  for (std::size_t f = 0; f < nf; ++f) order[f] = static_cast<int>(f);
  order_rng.shuffle(order);

  SessionStream s;
  s.hierarchy = h;
  s.way = shape.way;
  s.shots = shape.shots;
  s.queries_per_class = shape.queries_per_class;
  s.sessions = shape.sessions;

  std::vector<int> session_of(nf, 0);  // 0 = never introduced
  for (std::size_t t = 0; t < shape.sessions; ++t) {
    std::vector<int> group(order.begin() + static_cast<std::ptrdiff_t>(t * shape.way),
                           order.begin() + static_cast<std::ptrdiff_t>((t + 1) * shape.way));
    for (int f : group) session_of[static_cast<std::size_t>(f)] = static_cast<int>(t + 1);
    s.session_classes.push_back(std::move(group));
  }

  // Per fine class: [support | fine queries | coarse-query reserve | base pool].
  const std::size_t need = shape.shots + shape.queries_per_class;
  std::vector<std::vector<std::size_t>> support_idx(nf), query_idx(nf), reserve_idx(nf);
  std::vector<std::size_t> base_pool;
  for (std::size_t f = 0; f < nf; ++f) {
    auto idx = by_fine[f];
    split_rng.shuffle(idx);
    std::size_t cursor = 0;
    if (session_of[f] > 0) {
      if (idx.size() < need) {
        throw ConfigError("make_session_stream: fine class " + std::to_string(f) + " has " +
                          std::to_string(idx.size()) + " samples, needs K+H = " + std::to_string(need));
      }
      support_idx[f].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(shape.shots));
      query_idx[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(shape.shots),
                          idx.begin() + static_cast<std::ptrdiff_t>(need));
      cursor = need;
    }
    const std::size_t reserve = std::min(shape.queries_per_class, idx.size() - cursor);
    reserve_idx[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(cursor),
                          idx.begin() + static_cast<std::ptrdiff_t>(cursor + reserve));
    base_pool.insert(base_pool.end(), idx.begin() + static_cast<std::ptrdiff_t>(cursor + reserve), idx.end());
  }

  // Held-out probe panel, then the rest is coarse-labeled base training data.
  probe_rng.shuffle(base_pool);
  const std::size_t probes = std::min(shape.probe_count, base_pool.size() / 2);
  std::vector<std::size_t> probe_idx(base_pool.begin(), base_pool.begin() + static_cast<std::ptrdiff_t>(probes));
  std::vector<std::size_t> train_idx(base_pool.begin() + static_cast<std::ptrdiff_t>(probes), base_pool.end());
  std::sort(probe_idx.begin(), probe_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  for (std::size_t n : probe_idx) s.probes.add(ds.features.row(n), ds.coarse[n], ds.fine[n]);
  for (std::size_t n : train_idx) s.base_train.add(ds.features.row(n), ds.coarse[n], ds.fine[n]);

  for (std::size_t t = 0; t < shape.sessions; ++t) {
    LabeledDataset support;
    for (int f : s.session_classes[t]) {
      for (std::size_t n : support_idx[static_cast<std::size_t>(f)]) {
        support.add(ds.features.row(n), ds.coarse[n], ds.fine[n]);
      }
    }
    s.supports.push_back(std::move(support));
  }

  for (std::size_t t = 0; t <= shape.sessions; ++t) {
    QuerySet q;
    // Fine queries for every class introduced so far, in session order.
    for (std::size_t u = 0; u < t; ++u) {
      for (int f : s.session_classes[u]) {
        for (std::size_t n : query_idx[static_cast<std::size_t>(f)]) {
          q.add(ds.features.row(n), ds.coarse[n], ds.fine[n], Granularity::kFine);
        }
      }
    }
    // Coarse queries, drawn round-robin from the reserves of children that
    // have not been introduced by session t.
    for (std::size_t c = 0; c < h.coarse_count(); ++c) {
      std::vector<const std::vector<std::size_t>*> pools;
      for (int f : h.children[c]) {
        const int introduced = session_of[static_cast<std::size_t>(f)];
        if (introduced == 0 || static_cast<std::size_t>(introduced) > t) {
          pools.push_back(&reserve_idx[static_cast<std::size_t>(f)]);
        }
      }
      std::size_t taken = 0;
      for (std::size_t depth = 0; taken < shape.queries_per_class; ++depth) {
        bool any = false;
        for (const auto* pool : pools) {
          if (depth < pool->size() && taken < shape.queries_per_class) {
            const std::size_t n = (*pool)[depth];
            q.add(ds.features.row(n), ds.coarse[n], ds.fine[n], Granularity::kCoarse);
            ++taken;
            any = true;
          }
        }
        if (!any) break;
      }
    }
    s.queries.push_back(std::move(q));
  }
  return s;
}

}  // namespace knowe
