#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <span>

#include "knowe/analysis.hpp"
#include "knowe/embedding.hpp"
#include "knowe/protocol.hpp"
#include "test_util.hpp"

namespace knowe {
namespace {

using testing::random_mat;

TEST(Embedding, ShapesFollowNetShape) {
  Rng rng(1);
  const EmbeddingNet net = EmbeddingNet::create(NetShape{}, rng);
  EXPECT_EQ(net.input_dim(), 16u);
  EXPECT_EQ(net.feature_dim(), 32u);
  EXPECT_EQ(net.projection_dim(), 32u);
  const auto [f, q] = forward(net, Vec(16, 0.5));
  EXPECT_EQ(f.size(), 32u);
  EXPECT_NEAR(norm2(q), 1.0, 1e-12);
}

TEST(Embedding, BatchEmbedMatchesSingleForward) {
  Rng rng(2);
  const EmbeddingNet net = EmbeddingNet::create(NetShape{}, rng);
  const Mat x = random_mat(rng, 5, 16);
  const Mat f = embed(net, x);
  for (std::size_t n = 0; n < 5; ++n) {
    const Vec single = forward(net, x.row(n)).first;
    for (std::size_t i = 0; i < single.size(); ++i) EXPECT_EQ(f(n, i), single[i]);
  }
}

TEST(Embedding, ContrastiveLossHandCase) {
  // Two samples of one group with orthogonal keys: loss_n = log(1 + e^{(q.k_m - q.k_n)/tau}).
  Mat q(2, 2), k(2, 2);
  q(0, 0) = 1.0; q(1, 1) = 1.0;
  k(0, 0) = 1.0; k(1, 1) = 1.0;
  const ContrastiveLoss l = contrastive_loss(q, k, std::vector<int>{0, 0}, 0.5);
  EXPECT_NEAR(l.loss, 2.0 * std::log(1.0 + std::exp(-2.0)), 1e-12);
}

TEST(Embedding, ContrastiveIgnoresOtherGroups) {
  Rng rng(3);
  const Mat q = l2_normalize_rows(random_mat(rng, 4, 3));
  const Mat k = l2_normalize_rows(random_mat(rng, 4, 3));
  const ContrastiveLoss l = contrastive_loss(q, k, std::vector<int>{0, 1, 2, 3}, 0.2);
  EXPECT_EQ(l.loss, 0.0);
  for (double v : l.grad_q.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Embedding, SgdStepFormula) {
  Vec p{1.0, -2.0}, v{0.5, 0.0};
  const Vec g{0.1, 0.2};
  const OptimConfig opt{0.1, 0.9, 0.01, 8, 1, 0.2};
  sgd_step(p, g, v, opt);
  EXPECT_NEAR(v[0], 0.9 * 0.5 + 0.1 + 0.01 * 1.0, 1e-15);
  EXPECT_NEAR(v[1], 0.2 + 0.01 * -2.0, 1e-15);
  EXPECT_NEAR(p[0], 1.0 - 0.1 * v[0], 1e-15);
  EXPECT_NEAR(p[1], -2.0 - 0.1 * v[1], 1e-15);
}

TEST(Embedding, FrozenNetIgnoresSgd) {
  Rng rng(4);
  EmbeddingNet net = EmbeddingNet::create(NetShape{}, rng);
  net.frozen = true;
  const std::uint64_t before = checksum(net);
  EmbeddingNet grads = net.zeros_like();
  for (auto p : grads.parameters()) {
    for (double& v : p) v = 1.0;
  }
  NetVelocity vel;
  sgd_step(net, grads, vel, OptimConfig{});
  EXPECT_EQ(checksum(net), before);
}

TEST(Embedding, ClipGradientCapsJointNorm) {
  Rng rng(5);
  const EmbeddingNet net = EmbeddingNet::create(NetShape{}, rng);
  EmbeddingNet g = net.zeros_like();
  for (auto p : g.parameters()) {
    for (double& v : p) v = 1.0;
  }
  EmbeddingNet unclipped = g;
  clip_gradient(unclipped, 0.0);
  EXPECT_EQ(unclipped, g);
  clip_gradient(g, 2.0);
  double sq = 0.0;
  for (auto p : std::as_const(g).parameters()) sq += squared_norm(p);
  EXPECT_NEAR(std::sqrt(sq), 2.0, 1e-9);
}

TEST(Embedding, OptimConfigValidation) {
  EXPECT_NO_THROW(OptimConfig{}.validate());
  EXPECT_THROW((OptimConfig{0.0}).validate(), ConfigError);
  EXPECT_THROW((OptimConfig{0.1, 1.0}).validate(), ConfigError);
  EXPECT_THROW((OptimConfig{0.1, 0.9, 5e-4, 64, 10, 0.0}).validate(), ConfigError);
  EXPECT_THROW((OptimConfig{0.1, 0.9, 5e-4, 64, 10, 0.2, -1.0}).validate(), ConfigError);
}

BaseTrainResult train_desk_base(bool contrastive) {
  const SessionStream s = make_synthetic_stream(SyntheticSetup{}, 3);
  const TrainingPreset preset = desk_preset();
  Rng rng(3);
  NetShape shape = preset.net;
  shape.input_dim = s.base_train.input_dim();
  EmbeddingNet net = EmbeddingNet::create(shape, rng);
  BaseTrainOptions options;
  options.contrastive = contrastive;
  options.contrastive_weight = preset.contrastive_weight;
  options.view_sigma = preset.view_sigma;
  return train_base(net, s.base_train, preset.base, s.hierarchy, options, 3);
}

TEST(Embedding, CoarseTrainingConverges) {
  const BaseTrainResult r = train_desk_base(false);
  ASSERT_EQ(r.loss_trace.size(), desk_preset().base.epochs);
  EXPECT_LT(r.loss_trace.back(), 0.5 * r.loss_trace.front());
}

// Keys follow the network, so the combined loss is noisy; compare the tail
// average against the first epoch.
TEST(Embedding, ContrastiveTrainingLowersLoss) {
  const BaseTrainResult r = train_desk_base(true);
  ASSERT_EQ(r.loss_trace.size(), desk_preset().base.epochs);
  const auto tail = std::span(r.loss_trace).last(5);
  const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / 5.0;
  EXPECT_LT(mean, r.loss_trace.front());
}

// Same-coarse negatives push fine classes apart inside each coarse class, so
// nearest-neighbour fine accuracy improves over coarse cross-entropy alone.
TEST(Embedding, ContrastiveImprovesFineNearestNeighbour) {
  SyntheticSetup setup;
  const TrainingPreset preset = desk_preset();
  std::vector<double> gain;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SessionStream s = make_synthetic_stream(setup, seed);
    double acc[2];
    for (int use = 0; use < 2; ++use) {
      Rng rng(seed);
      NetShape shape = preset.net;
      shape.input_dim = s.base_train.input_dim();
      EmbeddingNet net = EmbeddingNet::create(shape, rng);
      BaseTrainOptions options;
      options.contrastive = use == 1;
      options.contrastive_weight = preset.contrastive_weight;
      options.view_sigma = preset.view_sigma;
      train_base(net, s.base_train, preset.base, s.hierarchy, options, seed);
      LabeledDataset train;
      for (const auto& sup : s.supports) {
        for (std::size_t n = 0; n < sup.size(); ++n) train.add(sup.features.row(n), sup.coarse[n], sup.fine[n]);
      }
      const QuerySet& q = s.queries[s.sessions];
      Mat test;
      std::vector<int> labels;
      for (std::size_t n = 0; n < q.size(); ++n) {
        if (q.level[n] != Granularity::kFine) continue;
        test.append_row(q.features.row(n));
        labels.push_back(q.fine[n]);
      }
      acc[use] = nearest_neighbor_accuracy(embed(net, train.features), train.fine, embed(net, test), labels);
    }
    gain.push_back(acc[1] - acc[0]);
  }
  EXPECT_GT(median(gain), 0.0);
}

}  // namespace
}  // namespace knowe
