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

#include "knowe/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <string>

#include "knowe/kernels.hpp"

namespace knowe {
namespace {

constexpr double kMinNorm = 1e-12;

void check_temperature(const ClassifierHead& head) {
  if (!(head.temperature > 0.0)) throw NumericError("classifier temperature must be positive");
}

// Unit rows of `m` plus their norms; raises on a degenerate direction.
std::pair<Mat, Vec> unit_rows(const Mat& m, const char* what) {
  Mat unit;
  Vec norms(m.rows());
  kernels::normalize_rows(m, unit, norms);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!(norms[r] >= kMinNorm)) {
      throw NumericError(std::string(what) + " " + std::to_string(r) +
                         " has zero norm under cosine normalization");
    }
  }
  return {std::move(unit), std::move(norms)};
}

}  // namespace

ClassifierHead ClassifierHead::create(std::size_t dim, std::size_t coarse_count, bool normalize,
                                      double temperature, Rng& rng) {
  ClassifierHead head;
  head.weights = Mat(0, dim);
  head.normalize = normalize;
  head.temperature = temperature;
  head.block_offsets = {0};
  augment(head, coarse_count, ColumnInit{}, rng);
  return head;
}

std::pair<std::size_t, std::size_t> ClassifierHead::block_range(std::size_t block) const {
  if (block >= blocks()) throw ShapeError("block " + std::to_string(block) + " does not exist");
  return {block_offsets[block], block_offsets[block + 1]};
}

std::size_t ClassifierHead::frozen_count() const {
  std::size_t n = 0;
  for (auto f : frozen) n += f != 0;
  return n;
}

Mat batch_logits(const ClassifierHead& head, const Mat& features) {
  if (features.cols() != head.dim()) {
    throw ShapeError("logits: feature dim " + std::to_string(features.cols()) + " != head dim " +
                     std::to_string(head.dim()));
  }
  Mat out;
  if (!head.normalize) {
    kernels::affine_rows(features, head.weights, {}, out);
    return out;
  }
  const auto [f_unit, f_norm] = unit_rows(features, "feature");
  const auto [w_unit, w_norm] = unit_rows(head.weights, "column");
  kernels::affine_rows(f_unit, w_unit, {}, out);
  return out;
}

Vec logits(const ClassifierHead& head, std::span<const double> feature) {
  Mat one(1, feature.size());
  std::copy(feature.begin(), feature.end(), one.data());
  const Mat out = batch_logits(head, one);
  return Vec(out.flat().begin(), out.flat().end());
}

Vec predict_proba(const ClassifierHead& head, std::span<const double> feature) {
  check_temperature(head);
  return softmax(logits(head, feature), head.temperature);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void augment(ClassifierHead& head, std::size_t way, const ColumnInit& init, Rng& rng) {
  const std::size_t dim = head.dim();
  const double sigma = init.sigma > 0.0 ? init.sigma : 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& f : head.frozen) f = 1;
  Vec column(dim);
  for (std::size_t k = 0; k < way; ++k) {
    for (double& v : column) v = sigma * rng.normal();
    head.weights.append_row(column);
    head.frozen.push_back(0);
  }
  head.block_offsets.push_back(head.weights.rows());
}

HeadGradient cross_entropy(const ClassifierHead& head, const Mat& features,
                           std::span<const int> targets) {
  check_temperature(head);
  const std::size_t n = features.rows();
  const std::size_t cols = head.columns();
  if (targets.size() != n) throw ShapeError("cross_entropy: one target per sample required");
  if (n == 0) throw ConfigError("cross_entropy: empty batch");
  if (features.cols() != head.dim()) throw ShapeError("cross_entropy: feature dim mismatch");
  for (int y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= cols) {
      throw LabelError("cross_entropy: target " + std::to_string(y) + " is not a column");
    }
  }

  Mat f_unit, w_unit;
  Vec f_norm(n), w_norm(cols);
  Mat scores;
  if (head.normalize) {
    std::tie(f_unit, f_norm) = unit_rows(features, "feature");
    std::tie(w_unit, w_norm) = unit_rows(head.weights, "column");
    kernels::affine_rows(f_unit, w_unit, {}, scores);
  } else {
    kernels::affine_rows(features, head.weights, {}, scores);
  }

  // residual(n, i) = (p_i - [i == y_n]) / (lambda * N)
  HeadGradient g;
  Mat residual(n, cols);
  const double lambda = head.temperature;
  const double scale = 1.0 / (lambda * static_cast<double>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const auto o = scores.row(s);
    require_finite(o, "cross_entropy logits");
    double top = o[0];
    for (double v : o) top = std::max(top, v);
    double total = 0.0;
    for (double v : o) total += std::exp((v - top) / lambda);
    const double log_total = std::log(total);
    const auto y = static_cast<std::size_t>(targets[s]);
    g.loss -= (o[y] - top) / lambda - log_total;
    auto r = residual.row(s);
    for (std::size_t i = 0; i < cols; ++i) {
      const double p = std::exp((o[i] - top) / lambda - log_total);
      r[i] = (p - (i == y ? 1.0 : 0.0)) * scale;
    }
  }
  g.loss /= static_cast<double>(n);

  g.weights = Mat(cols, head.dim());
  if (!head.normalize) {
    kernels::weight_grad(residual, features, g.weights, {});
    kernels::input_grad(residual, head.weights, g.features);
  } else {
    // d(cos)/dw_i = (f_hat - w_hat_i * cos) / |w_i|, and symmetrically for f.
    kernels::weight_grad(residual, f_unit, g.weights, {});
    kernels::input_grad(residual, w_unit, g.features);
    Vec col_dot(cols, 0.0);
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t s = 0; s < n; ++s) col_dot[i] += residual(s, i) * scores(s, i);
    }
    for (std::size_t i = 0; i < cols; ++i) {
      auto row = g.weights.row(i);
      const auto wu = w_unit.row(i);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = (row[k] - wu[k] * col_dot[i]) / w_norm[i];
    }
    for (std::size_t s = 0; s < n; ++s) {
      double row_dot = 0.0;
      for (std::size_t i = 0; i < cols; ++i) row_dot += residual(s, i) * scores(s, i);
      auto row = g.features.row(s);
      const auto fu = f_unit.row(s);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = (row[k] - fu[k] * row_dot) / f_norm[s];
    }
  }
  for (std::size_t i = 0; i < cols; ++i) {
    if (head.frozen[i]) {
      for (double& v : g.weights.row(i)) v = 0.0;
    }
  }
  return g;
}

HeadGradient support_loss_grad(const ClassifierHead& head, const Mat& features,
                               std::span<const int> targets, std::size_t session) {
  if (session == 0) throw LabelError("support_loss_grad: sessions start at 1");
  const auto [begin, end] = head.block_range(session);
  for (int y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) < begin || static_cast<std::size_t>(y) >= end) {
      throw LabelError("support_loss_grad: label " + std::to_string(y) + " outside session " +
                       std::to_string(session) + " block [" + std::to_string(begin) + ", " +
                       std::to_string(end) + ")");
    }
  }
  return cross_entropy(head, features, targets);
}

double frobenius_block_norm(const ClassifierHead& head, std::size_t block) {
  const auto [begin, end] = head.block_range(block);
  double ss = 0.0;
  for (std::size_t i = begin; i < end; ++i) ss += squared_norm(head.weights.row(i));
  return std::sqrt(ss);
}

}  // namespace knowe
