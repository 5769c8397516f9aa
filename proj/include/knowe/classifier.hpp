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
#include <span>
#include <utility>
#include <vector>

#include "knowe/numerics.hpp"
#include "knowe/rng.hpp"

namespace knowe {

// Bias-free linear classifier over features, optionally cosine-normalized.
//
// Row i of `weights` is the class vector w_i (the i-th column of the d x E
// weight matrix). Columns are grouped in session blocks: block 0 holds the R
// coarse classes and block t >= 1 the C fine classes introduced in session t.
struct ClassifierHead {
  Mat weights;
  std::vector<std::uint8_t> frozen;        // one flag per column
  std::vector<std::size_t> block_offsets;  // block b spans [offsets[b], offsets[b+1])
  bool normalize = true;
  double temperature = 0.5;  // lambda

  // A head holding only the coarse block, initialized like a new block.
  static ClassifierHead create(std::size_t dim, std::size_t coarse_count, bool normalize,
                               double temperature, Rng& rng);

  std::size_t dim() const { return weights.cols(); }
  std::size_t columns() const { return weights.rows(); }
  std::size_t blocks() const { return block_offsets.empty() ? 0 : block_offsets.size() - 1; }
  std::size_t session_count() const { return blocks() == 0 ? 0 : blocks() - 1; }
  std::pair<std::size_t, std::size_t> block_range(std::size_t block) const;
  std::size_t frozen_count() const;
};

// Logits o_i = w_i . f, or cosine logits when head.normalize.
Vec logits(const ClassifierHead& head, std::span<const double> feature);
Mat batch_logits(const ClassifierHead& head, const Mat& features);

// softmax(logits / lambda).
Vec predict_proba(const ClassifierHead& head, std::span<const double> feature);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct ColumnInit {
  // Gaussian with this standard deviation; <= 0 means 1/sqrt(d).
  double sigma = 0.0;
};

// Appends `way` columns as a new block and freezes every earlier column.
void augment(ClassifierHead& head, std::size_t way, const ColumnInit& init, Rng& rng);

struct HeadGradient {
  double loss = 0.0;
  Mat weights;   // dL/dW, rows of frozen columns are exactly zero
  Mat features;  // dL/df per sample
};

// Mean cross-entropy of softmax(logits / lambda) over all columns against the
// target column indices, with analytic gradients.
HeadGradient cross_entropy(const ClassifierHead& head, const Mat& features,
                           std::span<const int> targets);

// Cross-entropy on a session-t support set. Every target must be a column of
// block t; anything else raises LabelError.
HeadGradient support_loss_grad(const ClassifierHead& head, const Mat& features,
                               std::span<const int> targets, std::size_t session);

// Frobenius norm of the columns in block `block`.
double frobenius_block_norm(const ClassifierHead& head, std::size_t block);

}  // namespace knowe
