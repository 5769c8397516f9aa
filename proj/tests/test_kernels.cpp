#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>

#include "knowe/kernels.hpp"
#include "test_util.hpp"

namespace knowe {
namespace {

using testing::random_mat;

class KernelEquality : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { kernels::set_max_threads(GetParam()); }
  void TearDown() override { kernels::set_max_threads(0); }
};

TEST_P(KernelEquality, AffineRows) {
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const Mat in = random_mat(rng, 37 + k, 19), w = random_mat(rng, 23, 19);
    const Mat b = random_mat(rng, 1, 23);
    Mat s, p;
    kernels::serial::affine_rows(in, w, b.flat(), s);
    kernels::parallel::affine_rows(in, w, b.flat(), p);
    EXPECT_EQ(s, p);
  }
}

TEST_P(KernelEquality, InputGrad) {
  Rng rng(2);
  const Mat g = random_mat(rng, 41, 13), w = random_mat(rng, 13, 29);
  Mat s, p;
  kernels::serial::input_grad(g, w, s);
  kernels::parallel::input_grad(g, w, p);
  EXPECT_EQ(s, p);
}

TEST_P(KernelEquality, WeightGrad) {
  Rng rng(3);
  const Mat g = random_mat(rng, 64, 17), in = random_mat(rng, 64, 11);
  Mat sw(17, 11, 0.25), pw(17, 11, 0.25);
  Vec sb(17, 1.0), pb(17, 1.0);
  kernels::serial::weight_grad(g, in, sw, sb);
  kernels::parallel::weight_grad(g, in, pw, pb);
  EXPECT_EQ(sw, pw);
  EXPECT_EQ(sb, pb);
}

TEST_P(KernelEquality, NormalizeRows) {
  Rng rng(4);
  Mat in = random_mat(rng, 50, 9);
  for (double& v : in.row(3)) v = 0.0;
  Mat s, p;
  Vec sn(50), pn(50);
  kernels::serial::normalize_rows(in, s, sn);
  kernels::parallel::normalize_rows(in, p, pn);
  EXPECT_EQ(s, p);
  EXPECT_EQ(sn, pn);
  EXPECT_EQ(sn[3], 0.0);
  for (double v : s.row(3)) EXPECT_EQ(v, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelEquality, ::testing::Values(1, 2, 4));

TEST(Kernels, AffineMatchesHandProduct) {
  Mat in(1, 2), w(2, 2);
  in(0, 0) = 1.0; in(0, 1) = 2.0;
  w(0, 0) = 3.0; w(0, 1) = 4.0; w(1, 0) = -1.0; w(1, 1) = 0.5;
  Mat out;
  kernels::serial::affine_rows(in, w, Vec{0.5, 0.0}, out);
  EXPECT_DOUBLE_EQ(out(0, 0), 11.5);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.0);
}

TEST(Kernels, ForEachJobRunsEveryJobOnce) {
  kernels::set_max_threads(3);
  std::vector<int> hits(100, 0);
  kernels::for_each_job(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  kernels::set_max_threads(0);
}

TEST(Kernels, ForEachJobRethrows) {
  EXPECT_THROW(kernels::for_each_job(8, [](std::size_t i) {
                 if (i == 5) throw std::runtime_error("job 5");
               }),
               std::runtime_error);
}

}  // namespace
}  // namespace knowe
