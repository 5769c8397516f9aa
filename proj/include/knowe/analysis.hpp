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

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knowe/classifier.hpp"
#include "knowe/numerics.hpp"
#include "knowe/protocol.hpp"

namespace knowe {

// Builds the stream for one seed. Lets the same analysis run on a fixed stream
// or on a freshly generated synthetic stream per seed.
using StreamSource = std::function<SessionStream(std::uint64_t seed)>;

StreamSource fixed_stream(SessionStream stream);
StreamSource synthetic_source(SyntheticSetup setup);

// ---------------------------------------------------------------------------
// Stability decay

// Probe logits over the session stream. session_logits[t] holds the logits of
// every probe (rows) on every column existing at the end of session t.
// birth_logits[t] (t >= 1) holds the logits on block t right after it was
// appended, before any training.
struct LogitTrace {
  std::vector<Mat> session_logits;
  std::vector<Mat> birth_logits;

  std::size_t sessions() const { return session_logits.empty() ? 0 : session_logits.size() - 1; }
};

// Observer that fills `trace` from the probe panel during run_experiment.
SessionObserver logit_recorder(const Mat& probes, LogitTrace& trace);

// sum_i ((after_i - before_i) / before_i)^2. A zero entry of `before` raises
// UndefinedMetric; size mismatch raises ShapeError.
double stability_decay(std::span<const double> before, std::span<const double> after);

struct DecayValues {
  std::vector<double> per_probe;  // defined probes only
  std::size_t skipped = 0;        // probes with a zero reference logit
};

// Decay of every probe between sessions t and T over the columns existing at T.
// A column born after session t is compared against its birth logit.
DecayValues stability_decay(const LogitTrace& trace, std::size_t t, std::size_t T);

struct VariantDecay {
  std::string name;  // a, b, c or d
  RunFlags flags;
  std::vector<double> seed_median;  // median over probes, one per seed
  double median = 0.0;              // median over all probes of all seeds
  std::size_t skipped = 0;
};

struct OrderingReport {
  std::array<VariantDecay, 4> variants;  // a raw/unfrozen, b normalized/unfrozen, c raw/frozen, d normalized/frozen
  std::vector<bool> seed_ordered;        // per seed: D_d < D_b, D_d < D_c and D_a largest
  double ordered_fraction = 0.0;
  bool chain_holds = false;  // pooled medians: D_d < D_b < D_a and D_d < D_c < D_a
  std::size_t t = 1;
  std::size_t T = 0;
};

// Runs the four head variants on a frozen embedding for every seed and compares
// the decay between session t and the last session.
OrderingReport compare_variants(const StreamSource& source, const TrainingPreset& preset,
                                std::span<const std::uint64_t> seeds, std::size_t t = 1);

// ---------------------------------------------------------------------------
// Plasticity

// Gradient of the mean support loss over the unfrozen columns, written out
// from the per-column update rule of a cosine head (independent of
// cross_entropy). Frozen columns get zero rows.
Mat descent_direction(const ClassifierHead& head, const Mat& features, std::span<const int> targets);

// sum_ij a_ij * b_ij. ShapeError on mismatch.
double frobenius_inner(const Mat& a, const Mat& b);

struct PlasticityReport {
  std::vector<double> lr;
  std::vector<double> delta;  // L(W - lr * dW) - L(W)
  std::optional<double> largest_decreasing_lr;
  double inner = 0.0;  // <dW, g>
  double grad_norm = 0.0;
  bool stationary = false;
};

// dW comes from support_loss_grad, g from descent_direction.
PlasticityReport plasticity_probe(const ClassifierHead& head, const Mat& features,
                                  std::span<const int> targets, std::size_t session,
                                  std::span<const double> lr_grid);

struct PlasticitySweep {
  std::size_t trials = 0;
  std::size_t stationary = 0;
  std::size_t decreased = 0;       // strict decrease at the tested lr, non-stationary trials
  std::size_t positive_inner = 0;  // <dW, g> > 0 (or >= 0 at a stationary point)
  double min_inner = 0.0;
  std::vector<PlasticityReport> reports;
};

// Random normalized heads (R frozen coarse columns plus one trainable block of
// `way` columns) with random support batches of `way * shots` features.
PlasticitySweep plasticity_sweep(std::size_t trials, double lr, std::uint64_t seed,
                                 std::size_t dim = 32, std::size_t coarse = 5,
                                 std::size_t way = 5, std::size_t shots = 5,
                                 double temperature = 0.5);

// ---------------------------------------------------------------------------
// Weight growth

struct NormTrace {
  std::vector<double> norms;         // block t at the end of session t, t = 1..T
  std::vector<bool> outlier;         // per norm, > 3 MAD from the median
  std::size_t pairs = 0;             // adjacent pairs kept
  std::size_t growing = 0;           // kept pairs with strict growth
  double growth_fraction() const { return pairs == 0 ? 0.0 : static_cast<double>(growing) / pairs; }
};

NormTrace weight_norm_trace(std::span<const SessionReport> reports);

struct GrowthReport {
  std::vector<NormTrace> traces;  // one per seed
  std::size_t pairs = 0;
  std::size_t growing = 0;
  double growth_fraction() const { return pairs == 0 ? 0.0 : static_cast<double>(growing) / pairs; }
};

// Raw, unfrozen head on a frozen embedding; pools the traces of all seeds.
GrowthReport weight_growth(const StreamSource& source, const TrainingPreset& preset,
                           std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationCell {
  bool normalize = false;         // p
  bool freeze_classifier = false; // q
  bool freeze_embedding = false;
  std::uint64_t seed = 0;
  double average_accuracy = 0.0;
  std::optional<double> forgetting;
};

struct TruthRow {
  bool p = false;
  bool q = false;
  double delta_points = 0.0;  // median over seeds of A(embedding frozen) - A(unfrozen), in points
  bool r = false;             // delta_points > epsilon
};

struct AblationReport {
  std::vector<AblationCell> cells;
  std::array<TruthRow, 4> rows;  // (~p,~q), (p,q), (p,~q), (~p,q)
  double epsilon = 1.0;
  bool neither_implies_r = false;      // ~p and ~q => r
  bool either_implies_not_r = false;   // p or q => ~r
  bool biconditional = false;          // p or q <=> ~r
};

// epsilon is in accuracy points (percent). ConfigError if it is not positive.
AblationReport ablation_grid(const StreamSource& source, const TrainingPreset& preset,
                             std::span<const std::uint64_t> seeds, double epsilon = 1.0);

// Truth-table evaluation from per-cell deltas; exposed for threshold checks.
void evaluate_truth_table(AblationReport& report);

// ---------------------------------------------------------------------------

// Cosine 1-nearest-neighbour accuracy of `test` against `train`.
double nearest_neighbor_accuracy(const Mat& train, std::span<const int> train_labels,
                                 const Mat& test, std::span<const int> test_labels);

double median(std::vector<double> values);  // EmptyError when empty

}  // namespace knowe
