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

#include "knowe/classifier.hpp"
#include "knowe/data.hpp"
#include "knowe/numerics.hpp"
#include "knowe/rng.hpp"

namespace knowe {

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Fully connected stack with ReLU between consecutive layers and a linear
// final layer.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

struct NetShape {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t feature_dim = 32;
  std::size_t projection_hidden = 64;
  std::size_t projection_dim = 32;
};

// Trunk producing the feature f(x) used by the classifier, plus a one-hidden-
// layer projection head whose L2-normalized output is the contrastive vector q.
struct EmbeddingNet {
  Mlp trunk;
  Mlp projection;
  bool frozen = false;

  // He-initialized weights, zero biases.
  static EmbeddingNet create(const NetShape& shape, Rng& rng);
  // Same shapes with every parameter zero (gradient accumulator).
  EmbeddingNet zeros_like() const;

  std::size_t input_dim() const { return trunk.in_dim(); }
  std::size_t feature_dim() const { return trunk.out_dim(); }
  std::size_t projection_dim() const { return projection.out_dim(); }

  // Every weight and bias tensor, trunk first, in a fixed order.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  friend bool operator==(const EmbeddingNet&, const EmbeddingNet&) = default;
};

// FNV-1a over the bit patterns of every parameter.
std::uint64_t checksum(const EmbeddingNet& net);

struct OptimConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double tau = 0.2;
  double clip_norm = 0.0;  // cap on the embedding gradient norm per step; 0 disables

  // Throws ConfigError when lr <= 0, momentum outside [0,1) or tau <= 0.
  void validate() const;
};

// Rescales all gradients of `grads` so their joint L2 norm is at most `max_norm`
// (no-op when max_norm <= 0).
void clip_gradient(EmbeddingNet& grads, double max_norm);

// Activations recorded by a forward pass for the matching backward pass.
struct MlpTape {
  std::vector<Mat> inputs;  // input of each layer (post-ReLU of the previous)
  std::vector<Mat> pre;     // pre-activation output of each layer
};

Mat mlp_forward(const Mlp& mlp, const Mat& in, MlpTape* tape = nullptr);
// Accumulates parameter gradients into `grads` and returns dL/d(input).
Mat mlp_backward(const Mlp& mlp, const MlpTape& tape, const Mat& grad_out, Mlp& grads);

// Single-sample forward: (feature f, normalized projection q). A projection
// that is exactly zero yields q = 0.
std::pair<Vec, Vec> forward(const EmbeddingNet& net, std::span<const double> x);

// Features f(x) for a batch.
Mat embed(const EmbeddingNet& net, const Mat& inputs);

// Rows of `p` scaled to unit length (zero rows stay zero).
Mat l2_normalize_rows(const Mat& p, Vec* norms = nullptr);

struct ContrastiveLoss {
  double loss = 0.0;
  Mat grad_q;  // dL/dq_n; keys receive no gradient
};

// -sum_n log( e^{q_n.k_n/tau} / (e^{q_n.k_n/tau} + sum_{m != n, group_m == group_n} e^{q_n.k_m/tau}) )
ContrastiveLoss contrastive_loss(const Mat& queries, const Mat& keys, std::span<const int> groups,
                                 double tau);

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const OptimConfig& opt);

struct NetVelocity {
  std::vector<Vec> buffers;
};

// No-op when net.frozen.
void sgd_step(EmbeddingNet& net, const EmbeddingNet& grads, NetVelocity& velocity,
              const OptimConfig& opt);

// Updates only the columns whose frozen flag is clear.
void sgd_step(ClassifierHead& head, const Mat& grad, Mat& velocity, const OptimConfig& opt);

struct BaseBatchLoss {
  double loss = 0.0;
  double contrastive = 0.0;
  double cross_entropy = 0.0;
  EmbeddingNet net_grad;
  Mat head_grad;
};

// Combined base loss on one batch, averaged over the batch:
// (L_Con + sum of coarse CE) / N. `keys` are normalized key-branch vectors
// treated as constants.
BaseBatchLoss base_batch_loss(const EmbeddingNet& net, const ClassifierHead& coarse_head,
                              const Mat& views, const Mat& keys, std::span<const int> coarse,
                              double tau, bool use_contrastive, double contrastive_weight = 1.0);

struct BaseTrainOptions {
  bool contrastive = true;
  bool head_normalize = true;
  double head_temperature = 0.5;
  double view_sigma = 0.15;  // std of the additive jitter forming each view
  double contrastive_weight = 1.0;
};

struct BaseTrainResult {
  std::vector<double> loss_trace;  // mean batch loss per epoch
  ClassifierHead coarse_head;
  std::size_t singleton_samples = 0;  // samples with no same-class negative, summed over batches
};

BaseTrainResult train_base(EmbeddingNet& net, const LabeledDataset& base_train,
                           const OptimConfig& opt, const Hierarchy& hierarchy,
                           const BaseTrainOptions& options, std::uint64_t seed);

}  // namespace knowe
