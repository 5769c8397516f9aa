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

// Batch kernels used by the forward/backward passes and the classifier.
//
// Every kernel exists twice: `serial::` is the reference loop nest and
// `parallel::` splits the outermost output dimension across OpenMP threads.
// Each output element is accumulated by one thread in the same order as the
// serial loop, so the two variants agree bit for bit.

#include <functional>
#include <span>

#include "knowe/numerics.hpp"

namespace knowe::kernels {

// Caps OpenMP threads for subsequent kernels and grid cells (<= 0 leaves the
// runtime default). Reads KNWE_THREADS when called through apply_thread_env().
void set_max_threads(int threads);
int max_threads();
void apply_thread_env();

// Runs job(0..count-1) across threads. Jobs must write disjoint outputs; the
// first exception thrown by any job is rethrown after all jobs finish.
void for_each_job(std::size_t count, const std::function<void(std::size_t)>& job);

namespace serial {

// out(n, o) = bias[o] + sum_i in(n, i) * weight(o, i). `bias` may be empty.
void affine_rows(const Mat& in, const Mat& weight, std::span<const double> bias, Mat& out);
// grad_in(n, i) = sum_o grad_out(n, o) * weight(o, i).
void input_grad(const Mat& grad_out, const Mat& weight, Mat& grad_in);
// grad_weight(o, i) += sum_n grad_out(n, o) * in(n, i); grad_bias[o] += sum_n grad_out(n, o).
void weight_grad(const Mat& grad_out, const Mat& in, Mat& grad_weight, std::span<double> grad_bias);
// Divides each row by its L2 norm; norms[r] receives the norm. Zero rows stay zero.
void normalize_rows(const Mat& in, Mat& out, std::span<double> norms);

}  // namespace serial

namespace parallel {

void affine_rows(const Mat& in, const Mat& weight, std::span<const double> bias, Mat& out);
void input_grad(const Mat& grad_out, const Mat& weight, Mat& grad_in);
void weight_grad(const Mat& grad_out, const Mat& in, Mat& grad_weight, std::span<double> grad_bias);
void normalize_rows(const Mat& in, Mat& out, std::span<double> norms);

}  // namespace parallel

using parallel::affine_rows;
using parallel::input_grad;
using parallel::normalize_rows;
using parallel::weight_grad;

}  // namespace knowe::kernels
