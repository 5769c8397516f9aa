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

#include "knowe/kernels.hpp"

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>

#ifdef KNOWE_HAVE_OPENMP
#include <omp.h>
#endif

namespace knowe::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

void check_affine(const Mat& in, const Mat& weight, std::span<const double> bias, Mat& out) {
  if (in.cols() != weight.cols()) throw ShapeError("affine_rows: input width does not match weight");
  if (!bias.empty() && bias.size() != weight.rows()) throw ShapeError("affine_rows: bias length");
  if (out.rows() != in.rows() || out.cols() != weight.rows()) out = Mat(in.rows(), weight.rows());
}

void check_input_grad(const Mat& grad_out, const Mat& weight, Mat& grad_in) {
  if (grad_out.cols() != weight.rows()) throw ShapeError("input_grad: gradient width");
  if (grad_in.rows() != grad_out.rows() || grad_in.cols() != weight.cols()) {
    grad_in = Mat(grad_out.rows(), weight.cols());
  }
}

void check_weight_grad(const Mat& grad_out, const Mat& in, const Mat& grad_weight,
                       std::span<double> grad_bias) {
  if (grad_out.rows() != in.rows()) throw ShapeError("weight_grad: batch mismatch");
  if (grad_weight.rows() != grad_out.cols() || grad_weight.cols() != in.cols()) {
    throw ShapeError("weight_grad: accumulator shape");
  }
  if (!grad_bias.empty() && grad_bias.size() != grad_out.cols()) throw ShapeError("weight_grad: bias");
}

inline void affine_row(const Mat& in, const Mat& weight, std::span<const double> bias, Mat& out,
                       std::size_t n) {
  const auto x = in.row(n);
  auto y = out.row(n);
  for (std::size_t o = 0; o < weight.rows(); ++o) {
    const auto w = weight.row(o);
    double s = bias.empty() ? 0.0 : bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    y[o] = s;
  }
}

inline void input_grad_row(const Mat& grad_out, const Mat& weight, Mat& grad_in, std::size_t n) {
  auto dx = grad_in.row(n);
  for (double& v : dx) v = 0.0;
  const auto dy = grad_out.row(n);
  for (std::size_t o = 0; o < weight.rows(); ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const auto w = weight.row(o);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * w[i];
  }
}

inline void weight_grad_row(const Mat& grad_out, const Mat& in, Mat& grad_weight,
                            std::span<double> grad_bias, std::size_t o) {
  auto dw = grad_weight.row(o);
  double db = 0.0;
  for (std::size_t n = 0; n < in.rows(); ++n) {
    const double g = grad_out(n, o);
    db += g;
    if (g == 0.0) continue;
    const auto x = in.row(n);
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += g * x[i];
  }
  if (!grad_bias.empty()) grad_bias[o] += db;
}

inline void normalize_row(const Mat& in, Mat& out, std::span<double> norms, std::size_t r) {
  const auto src = in.row(r);
  auto dst = out.row(r);
  double ss = 0.0;
  for (double v : src) ss += v * v;
  const double nrm = std::sqrt(ss);
  norms[r] = nrm;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = nrm > 0.0 ? src[i] / nrm : 0.0;
}

void check_normalize(const Mat& in, Mat& out, std::span<double> norms) {
  if (norms.size() != in.rows()) throw ShapeError("normalize_rows: norms length");
  if (out.rows() != in.rows() || out.cols() != in.cols()) out = Mat(in.rows(), in.cols());
}

int g_max_threads = 0;

}  // namespace

void set_max_threads(int threads) {
  g_max_threads = threads > 0 ? threads : 0;
#ifdef KNOWE_HAVE_OPENMP
  if (g_max_threads > 0) omp_set_num_threads(g_max_threads);
#endif
}

int max_threads() {
#ifdef KNOWE_HAVE_OPENMP
  return g_max_threads > 0 ? g_max_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

void apply_thread_env() {
  if (const char* env = std::getenv("KNWE_THREADS")) {
    try {
      set_max_threads(std::stoi(env));
    } catch (const std::exception&) {
      throw ConfigError(std::string("KNWE_THREADS is not an integer: ") + env);
    }
  }
}

void for_each_job(std::size_t count, const std::function<void(std::size_t)>& job) {
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1) if (count > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      job(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(knowe_job_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

namespace serial {

void affine_rows(const Mat& in, const Mat& weight, std::span<const double> bias, Mat& out) {
  check_affine(in, weight, bias, out);
  for (std::size_t n = 0; n < in.rows(); ++n) affine_row(in, weight, bias, out, n);
}

void input_grad(const Mat& grad_out, const Mat& weight, Mat& grad_in) {
  check_input_grad(grad_out, weight, grad_in);
  for (std::size_t n = 0; n < grad_out.rows(); ++n) input_grad_row(grad_out, weight, grad_in, n);
}

void weight_grad(const Mat& grad_out, const Mat& in, Mat& grad_weight, std::span<double> grad_bias) {
  check_weight_grad(grad_out, in, grad_weight, grad_bias);
  for (std::size_t o = 0; o < grad_weight.rows(); ++o) {
    weight_grad_row(grad_out, in, grad_weight, grad_bias, o);
  }
}

void normalize_rows(const Mat& in, Mat& out, std::span<double> norms) {
  check_normalize(in, out, norms);
  for (std::size_t r = 0; r < in.rows(); ++r) normalize_row(in, out, norms, r);
}

}  // namespace serial

namespace parallel {

void affine_rows(const Mat& in, const Mat& weight, std::span<const double> bias, Mat& out) {
  check_affine(in, weight, bias, out);
  const auto rows = static_cast<std::ptrdiff_t>(in.rows());
  [[maybe_unused]] const bool big = in.size() * weight.rows() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t n = 0; n < rows; ++n) {
    affine_row(in, weight, bias, out, static_cast<std::size_t>(n));
  }
}

void input_grad(const Mat& grad_out, const Mat& weight, Mat& grad_in) {
  check_input_grad(grad_out, weight, grad_in);
  const auto rows = static_cast<std::ptrdiff_t>(grad_out.rows());
  [[maybe_unused]] const bool big = grad_out.size() * weight.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t n = 0; n < rows; ++n) {
    input_grad_row(grad_out, weight, grad_in, static_cast<std::size_t>(n));
  }
}

void weight_grad(const Mat& grad_out, const Mat& in, Mat& grad_weight, std::span<double> grad_bias) {
  check_weight_grad(grad_out, in, grad_weight, grad_bias);
  const auto outs = static_cast<std::ptrdiff_t>(grad_weight.rows());
  [[maybe_unused]] const bool big = grad_out.size() * in.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t o = 0; o < outs; ++o) {
    weight_grad_row(grad_out, in, grad_weight, grad_bias, static_cast<std::size_t>(o));
  }
}

void normalize_rows(const Mat& in, Mat& out, std::span<double> norms) {
  check_normalize(in, out, norms);
  const auto rows = static_cast<std::ptrdiff_t>(in.rows());
  [[maybe_unused]] const bool big = in.size() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    normalize_row(in, out, norms, static_cast<std::size_t>(r));
  }
}

}  // namespace parallel
}  // namespace knowe::kernels
