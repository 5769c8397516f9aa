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

#include "knowe/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <utility>
#include <numeric>
#include <string>

#include "knowe/kernels.hpp"

namespace knowe {
namespace {

DenseLayer he_layer(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer layer{Mat(out, in), Vec(out, 0.0)};
  const double sigma = std::sqrt(2.0 / static_cast<double>(in));
  for (double& w : layer.weight.flat()) w = sigma * rng.normal();
  return layer;
}

Mlp zeros_like(const Mlp& mlp) {
  Mlp out;
  for (const auto& layer : mlp.layers) {
    out.layers.push_back({Mat(layer.weight.rows(), layer.weight.cols()), Vec(layer.bias.size(), 0.0)});
  }
  return out;
}

void collect(Mlp& mlp, std::vector<std::span<double>>& out) {
  for (auto& layer : mlp.layers) {
    out.emplace_back(layer.weight.flat());
    out.emplace_back(layer.bias);
  }
}

void collect(const Mlp& mlp, std::vector<std::span<const double>>& out) {
  for (const auto& layer : mlp.layers) {
    out.emplace_back(layer.weight.flat());
    out.emplace_back(layer.bias);
  }
}

Mat gather_rows(const Mat& src, std::span<const std::size_t> rows) {
  Mat out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(src.row(rows[r]).begin(), src.cols(), out.row(r).begin());
  }
  return out;
}

}  // namespace

EmbeddingNet EmbeddingNet::create(const NetShape& shape, Rng& rng) {
  if (shape.input_dim == 0 || shape.feature_dim == 0 || shape.projection_dim == 0 ||
      shape.projection_hidden == 0) {
    throw ConfigError("EmbeddingNet: zero-width layer");
  }
  EmbeddingNet net;
  std::size_t in = shape.input_dim;
  for (std::size_t width : shape.hidden) {
    if (width == 0) throw ConfigError("EmbeddingNet: zero-width hidden layer");
    net.trunk.layers.push_back(he_layer(in, width, rng));
    in = width;
  }
  net.trunk.layers.push_back(he_layer(in, shape.feature_dim, rng));
  net.projection.layers.push_back(he_layer(shape.feature_dim, shape.projection_hidden, rng));
  net.projection.layers.push_back(he_layer(shape.projection_hidden, shape.projection_dim, rng));
  return net;
}

EmbeddingNet EmbeddingNet::zeros_like() const {
  EmbeddingNet out;
  out.trunk = knowe::zeros_like(trunk);
  out.projection = knowe::zeros_like(projection);
  return out;
}

std::vector<std::span<double>> EmbeddingNet::parameters() {
  std::vector<std::span<double>> out;
  collect(trunk, out);
  collect(projection, out);
  return out;
}

std::vector<std::span<const double>> EmbeddingNet::parameters() const {
  std::vector<std::span<const double>> out;
  collect(trunk, out);
  collect(projection, out);
  return out;
}

std::uint64_t checksum(const EmbeddingNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto tensor : net.parameters()) {
    for (double v : tensor) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= bits & 0xffU;
        h *= 0x100000001b3ULL;
        bits >>= 8;
      }
    }
  }
  return h;
}

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
  if (!(tau > 0.0)) throw ConfigError("optimizer: tau must be positive");
  if (weight_decay < 0.0) throw ConfigError("optimizer: weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("optimizer: batch_size must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("optimizer: clip_norm must be non-negative");
}

void clip_gradient(EmbeddingNet& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto p : std::as_const(grads).parameters()) sq += squared_norm(p);
  if (sq <= max_norm * max_norm) return;
  const double scale = max_norm / std::sqrt(sq);
  for (auto p : grads.parameters()) {
    for (double& v : p) v *= scale;
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

Mat mlp_forward(const Mlp& mlp, const Mat& in, MlpTape* tape) {
  if (in.cols() != mlp.in_dim()) {
    throw ShapeError("mlp_forward: input dim " + std::to_string(in.cols()) + " != " +
                     std::to_string(mlp.in_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Mat x = in;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    Mat y;
    kernels::affine_rows(x, layer.weight, layer.bias, y);
    if (tape) {
      tape->inputs.push_back(std::move(x));
      tape->pre.push_back(y);
    }
    if (l + 1 < mlp.layers.size()) {
      for (double& v : y.flat()) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(y);
  }
  return x;
}

Mat mlp_backward(const Mlp& mlp, const MlpTape& tape, const Mat& grad_out, Mlp& grads) {
  Mat g = grad_out;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    if (l + 1 < mlp.layers.size()) {
      const Mat& pre = tape.pre[l];
      auto gv = g.flat();
      const auto pv = pre.flat();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (pv[i] <= 0.0) gv[i] = 0.0;
      }
    }
    kernels::weight_grad(g, tape.inputs[l], grads.layers[l].weight, grads.layers[l].bias);
    Mat gin;
    kernels::input_grad(g, mlp.layers[l].weight, gin);
    g = std::move(gin);
  }
  return g;
}

Mat l2_normalize_rows(const Mat& p, Vec* norms) {
  Vec n(p.rows());
  Mat out;
  kernels::normalize_rows(p, out, n);
  if (norms) *norms = std::move(n);
  return out;
}

std::pair<Vec, Vec> forward(const EmbeddingNet& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.size()) + " values, net expects " +
                     std::to_string(net.input_dim()));
  }
  Mat in(1, x.size());
  std::copy(x.begin(), x.end(), in.data());
  const Mat f = mlp_forward(net.trunk, in);
  const Mat q = l2_normalize_rows(mlp_forward(net.projection, f));
  return {Vec(f.flat().begin(), f.flat().end()), Vec(q.flat().begin(), q.flat().end())};
}

Mat embed(const EmbeddingNet& net, const Mat& inputs) { return mlp_forward(net.trunk, inputs); }

// ---------------------------------------------------------------------------
// Losses

ContrastiveLoss contrastive_loss(const Mat& queries, const Mat& keys, std::span<const int> groups,
                                 double tau) {
  const std::size_t n = queries.rows();
  if (n == 0) throw ConfigError("contrastive_loss: empty batch");
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: tau must be positive");
  if (keys.rows() != n || keys.cols() != queries.cols() || groups.size() != n) {
    throw ShapeError("contrastive_loss: queries, keys and groups must align");
  }
  ContrastiveLoss out;
  out.grad_q = Mat(n, queries.cols());
  std::vector<std::size_t> members;
  Vec s;
  for (std::size_t a = 0; a < n; ++a) {
    members.clear();
    members.push_back(a);
    for (std::size_t m = 0; m < n; ++m) {
      if (m != a && groups[m] == groups[a]) members.push_back(m);
    }
    if (members.size() == 1) continue;  // log(1) = 0, no gradient
    const auto q = queries.row(a);
    s.assign(members.size(), 0.0);
    for (std::size_t j = 0; j < members.size(); ++j) s[j] = dot(q, keys.row(members[j])) / tau;
    const double top = *std::max_element(s.begin(), s.end());
    double total = 0.0;
    for (double v : s) total += std::exp(v - top);
    const double lse = top + std::log(total);
    out.loss += lse - s[0];
    auto g = out.grad_q.row(a);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const double weight = (std::exp(s[j] - lse) - (j == 0 ? 1.0 : 0.0)) / tau;
      const auto k = keys.row(members[j]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += weight * k[i];
    }
  }
  return out;
}

BaseBatchLoss base_batch_loss(const EmbeddingNet& net, const ClassifierHead& coarse_head,
                              const Mat& views, const Mat& keys, std::span<const int> coarse,
                              double tau, bool use_contrastive, double contrastive_weight) {
  const std::size_t n = views.rows();
  BaseBatchLoss out;
  out.net_grad = net.zeros_like();

  MlpTape trunk_tape;
  const Mat features = mlp_forward(net.trunk, views, &trunk_tape);
  HeadGradient ce = cross_entropy(coarse_head, features, coarse);
  out.cross_entropy = ce.loss;
  out.head_grad = std::move(ce.weights);
  Mat grad_features = std::move(ce.features);

  if (use_contrastive) {
    MlpTape proj_tape;
    const Mat projected = mlp_forward(net.projection, features, &proj_tape);
    Vec norms;
    const Mat q = l2_normalize_rows(projected, &norms);
    const ContrastiveLoss con = contrastive_loss(q, keys, coarse, tau);
    out.contrastive = contrastive_weight * con.loss / static_cast<double>(n);
    // Back through q = p / |p|: dp = (dq - q (q . dq)) / |p|.
    Mat grad_p(n, q.cols());
    for (std::size_t r = 0; r < n; ++r) {
      if (norms[r] <= 0.0) continue;
      const auto qr = q.row(r);
      const auto dq = con.grad_q.row(r);
      double qd = 0.0;
      for (std::size_t i = 0; i < qr.size(); ++i) qd += qr[i] * dq[i];
      auto dp = grad_p.row(r);
      for (std::size_t i = 0; i < qr.size(); ++i) {
        dp[i] = contrastive_weight * (dq[i] - qr[i] * qd) / (norms[r] * static_cast<double>(n));
      }
    }
    const Mat grad_from_proj = mlp_backward(net.projection, proj_tape, grad_p, out.net_grad.projection);
    for (std::size_t i = 0; i < grad_features.size(); ++i) {
      grad_features.data()[i] += grad_from_proj.data()[i];
    }
  }
  mlp_backward(net.trunk, trunk_tape, grad_features, out.net_grad.trunk);
  out.loss = out.contrastive + out.cross_entropy;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const OptimConfig& opt) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = opt.momentum * velocity[i] + grad[i] + opt.weight_decay * param[i];
    param[i] -= opt.lr * velocity[i];
  }
}

void sgd_step(EmbeddingNet& net, const EmbeddingNet& grads, NetVelocity& velocity,
              const OptimConfig& opt) {
  if (net.frozen) return;
  auto params = net.parameters();
  const auto g = grads.parameters();
  if (g.size() != params.size()) throw ShapeError("sgd_step: gradient net has a different layout");
  if (velocity.buffers.empty()) {
    for (const auto& p : params) velocity.buffers.emplace_back(p.size(), 0.0);
  }
  for (std::size_t t = 0; t < params.size(); ++t) sgd_step(params[t], g[t], velocity.buffers[t], opt);
}

void sgd_step(ClassifierHead& head, const Mat& grad, Mat& velocity, const OptimConfig& opt) {
  if (grad.rows() != head.columns() || grad.cols() != head.dim()) {
    throw ShapeError("sgd_step: head gradient shape");
  }
  if (velocity.rows() != head.columns() || velocity.cols() != head.dim()) {
    Mat grown(head.columns(), head.dim());
    for (std::size_t r = 0; r < std::min(velocity.rows(), grown.rows()); ++r) {
      std::copy_n(velocity.row(r).begin(), head.dim(), grown.row(r).begin());
    }
    velocity = std::move(grown);
  }
  for (std::size_t i = 0; i < head.columns(); ++i) {
    if (head.frozen[i]) continue;
    sgd_step(head.weights.row(i), grad.row(i), velocity.row(i), opt);
  }
}

// ---------------------------------------------------------------------------
// Base session

BaseTrainResult train_base(EmbeddingNet& net, const LabeledDataset& base_train,
                           const OptimConfig& opt, const Hierarchy& hierarchy,
                           const BaseTrainOptions& options, std::uint64_t seed) {
  opt.validate();
  if (base_train.input_dim() != net.input_dim() && base_train.size() > 0) {
    throw ShapeError("train_base: data dim does not match the net");
  }
  const Rng root(seed);
  Rng head_rng = root.fork("base/head");
  Rng shuffle_rng = root.fork("base/shuffle");
  Rng view_rng = root.fork("base/views");

  BaseTrainResult result;
  result.coarse_head = ClassifierHead::create(net.feature_dim(), hierarchy.coarse_count(),
                                              options.head_normalize, options.head_temperature,
                                              head_rng);
  if (base_train.size() == 0) return result;

  NetVelocity net_velocity;
  Mat head_velocity;
  std::vector<std::size_t> order(base_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Mat x = gather_rows(base_train.features, rows);
      std::vector<int> coarse(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) coarse[r] = base_train.coarse[rows[r]];

      Mat view = x;
      Mat key_view = x;
      for (double& v : view.flat()) v += options.view_sigma * view_rng.normal();
      for (double& v : key_view.flat()) v += options.view_sigma * view_rng.normal();

      Mat keys;
      if (options.contrastive) {
        keys = l2_normalize_rows(mlp_forward(net.projection, mlp_forward(net.trunk, key_view)));
        for (std::size_t a = 0; a < rows.size(); ++a) {
          if (std::count(coarse.begin(), coarse.end(), coarse[a]) == 1) ++result.singleton_samples;
        }
      }
      BaseBatchLoss step = base_batch_loss(net, result.coarse_head, view, keys, coarse, opt.tau,
                                           options.contrastive, options.contrastive_weight);
      sgd_step(net, step.net_grad, net_velocity, opt);
      sgd_step(result.coarse_head, step.head_grad, head_velocity, opt);
      epoch_loss += step.loss;
      ++batches;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

}  // namespace knowe
