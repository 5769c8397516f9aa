#pragma once

#include <cmath>
#include <span>

#include "knowe/numerics.hpp"
#include "knowe/rng.hpp"

namespace knowe::testing {

inline Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols, double sigma = 1.0) {
  Mat m(rows, cols);
  for (double& v : m.flat()) v = rng.normal(0.0, sigma);
  return m;
}

// |a - b| / max(|a| + |b|, floor), over whole vectors.
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    scale += a[i] * a[i] + b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(scale), floor);
}

// Central differences of f with respect to every entry of m.
template <typename F>
Vec numeric_grad(Mat& m, F&& f, double h = 1e-5) {
  Vec g(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double keep = m.flat()[i];
    m.flat()[i] = keep + h;
    const double up = f();
    m.flat()[i] = keep - h;
    const double down = f();
    m.flat()[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace knowe::testing
