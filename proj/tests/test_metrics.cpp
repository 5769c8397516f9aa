#include <gtest/gtest.h>

#include <vector>

#include "knowe/errors.hpp"
#include "knowe/metrics.hpp"

namespace knowe {
namespace {

MetricSeries two_session_example() {
  MetricSeries s;
  s.total = {0.9, 0.5, 0.3};
  s.coarse = {0.9, 0.45, std::nullopt};
  s.fine = {std::nullopt, 0.6, 0.3};
  s.seen_fine = {0, 2, 4};
  s.fine_total = 4;
  return s;
}

TEST(Metrics, AverageAccuracyOfPublishedTotals) {
  const std::vector<double> cifar{72.07, 36.00, 28.13, 30.27, 32.20, 31.20,
                                  30.93, 36.33, 39.27, 43.20, 43.93};
  const std::vector<double> living17{94.21, 63.63, 50.88, 43.82, 42.84, 40.29, 47.75, 53.53};
  EXPECT_NEAR(average_accuracy(cifar), 38.50, 0.005);
  EXPECT_NEAR(average_accuracy(living17), 54.62, 0.005);
}

TEST(Metrics, AverageAccuracyOfEmptySeriesThrows) {
  EXPECT_THROW(average_accuracy(std::vector<double>{}), ConfigError);
}

TEST(Metrics, FineAndCoarseForgettingHandCases) {
  EXPECT_NEAR(fine_forgetting(0.6, 0.3), 0.5, 1e-12);
  EXPECT_NEAR(fine_forgetting(0.4, 0.5), -0.25, 1e-12);
  EXPECT_NEAR(coarse_forgetting(0.9, 0.45), 0.5, 1e-12);
  EXPECT_NEAR(coarse_forgetting(0.8, 0.0), 1.0, 1e-12);
  EXPECT_THROW(fine_forgetting(0.0, 0.3), UndefinedMetric);
  EXPECT_THROW(coarse_forgetting(0.0, 0.3), UndefinedMetric);
}

TEST(Metrics, OverallForgettingWorkedExample) {
  EXPECT_NEAR(overall_forgetting(two_session_example()), 0.75, 1e-12);
}

TEST(Metrics, OverallForgettingThreeSessions) {
  MetricSeries s;
  s.total = {1.0, 0.8, 0.6, 0.5};
  s.coarse = {1.0, 0.8, 0.5, std::nullopt};
  s.fine = {std::nullopt, 0.8, 0.6, 0.3};
  s.seen_fine = {0, 2, 4, 6};
  s.fine_total = 6;
  // F_f^2 = 0.25, F_f^3 = 0.5; F_c^1 = 0.2, F_c^2 = 0.5.
  const double expected =
      0.5 * (0.25 * 4.0 / 6.0 + 0.5 * 6.0 / 6.0 + 0.2 * (1.0 - 2.0 / 6.0) + 0.5 * (1.0 - 4.0 / 6.0));
  EXPECT_NEAR(overall_forgetting(s), expected, 1e-12);
}

TEST(Metrics, ConstantAccuracyHasNoForgetting) {
  for (double a : {0.1, 0.5, 0.93}) {
    MetricSeries s;
    const std::size_t T = 5;
    for (std::size_t t = 0; t <= T; ++t) {
      s.total.push_back(a);
      s.coarse.push_back(t < T ? std::optional<double>(a) : std::nullopt);
      s.fine.push_back(t > 0 ? std::optional<double>(a) : std::nullopt);
      s.seen_fine.push_back(2 * t);
    }
    s.fine_total = 2 * T;
    EXPECT_NEAR(overall_forgetting(s), 0.0, 1e-12);
    EXPECT_NEAR(average_accuracy(s.total), a, 1e-12);
  }
}

TEST(Metrics, OverallForgettingNeedsTwoSessions) {
  MetricSeries s;
  s.total = {0.9, 0.5};
  s.coarse = {0.9, 0.5};
  s.fine = {std::nullopt, 0.5};
  s.seen_fine = {0, 2};
  s.fine_total = 2;
  EXPECT_THROW(overall_forgetting(s), ConfigError);
}

TEST(Metrics, MissingComponentIsUndefined) {
  MetricSeries s = two_session_example();
  s.fine[1] = 0.0;
  EXPECT_THROW(overall_forgetting(s), UndefinedMetric);
}

}  // namespace
}  // namespace knowe
