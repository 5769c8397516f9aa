#include <gtest/gtest.h>

#include "oracles.hpp"

namespace knowe::testing {
namespace {

constexpr std::size_t kInstances = 60;
constexpr double kTolerance = 1e-4;

TEST(GradientOracle, ContrastiveQueries) {
  const OracleResult r = contrastive_oracle(kInstances, 11);
  EXPECT_EQ(r.instances, kInstances);
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradientOracle, CoarseCrossEntropyNormalized) {
  EXPECT_LT(coarse_ce_oracle(kInstances, 12, true).max_rel_error, kTolerance);
}

TEST(GradientOracle, CoarseCrossEntropyRaw) {
  EXPECT_LT(coarse_ce_oracle(kInstances, 13, false).max_rel_error, kTolerance);
}

TEST(GradientOracle, SessionCrossEntropyUnitTemperature) {
  EXPECT_LT(session_ce_oracle(kInstances, 14, 1.0).max_rel_error, kTolerance);
}

TEST(GradientOracle, SessionCrossEntropyScaledTemperature) {
  EXPECT_LT(session_ce_oracle(kInstances, 15, 0.5).max_rel_error, kTolerance);
}

TEST(GradientOracle, DescentDirectionUnitTemperature) {
  EXPECT_LT(descent_direction_oracle(kInstances, 16, 1.0).max_rel_error, kTolerance);
}

TEST(GradientOracle, DescentDirectionScaledTemperature) {
  EXPECT_LT(descent_direction_oracle(kInstances, 17, 0.5).max_rel_error, kTolerance);
}

TEST(GradientOracle, BaseLossThroughEmbedding) {
  EXPECT_LT(base_loss_oracle(kInstances, 18).max_rel_error, kTolerance);
}

}  // namespace
}  // namespace knowe::testing
