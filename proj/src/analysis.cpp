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


#include "knowe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>

#include "knowe/errors.hpp"
#include "knowe/kernels.hpp"
#include "knowe/rng.hpp"

namespace knowe {
namespace {

std::vector<SessionStream> build_streams(const StreamSource& source,
                                         std::span<const std::uint64_t> seeds) {
  std::vector<SessionStream> streams(seeds.size());
  kernels::for_each_job(seeds.size(), [&](std::size_t i) { streams[i] = source(seeds[i]); });
  return streams;
}

Mat block_columns(const Mat& logits, std::size_t begin, std::size_t end) {
  Mat out(logits.rows(), end - begin);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = logits(r, c);
  }
  return out;
}

double loss_after_step(const ClassifierHead& head, const Mat& step, double lr, const Mat& features,
                       std::span<const int> targets) {
  ClassifierHead moved = head;
  auto w = moved.weights.flat();
  const auto s = step.flat();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * s[i];
  return cross_entropy(moved, features, targets).loss;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lo + hi);
}

StreamSource fixed_stream(SessionStream stream) {
  auto shared = std::make_shared<const SessionStream>(std::move(stream));
  return [shared](std::uint64_t) { return *shared; };
}

StreamSource synthetic_source(SyntheticSetup setup) {
  return [setup](std::uint64_t seed) { return make_synthetic_stream(setup, seed); };
}

// ---------------------------------------------------------------------------
// Stability decay

SessionObserver logit_recorder(const Mat& probes, LogitTrace& trace) {
  return [&probes, &trace](const Model& model, std::size_t session, SessionEvent event) {
    const Mat logits = batch_logits(model.head, embed(model.net, probes));
    if (event == SessionEvent::kTrained) {
      if (trace.session_logits.size() <= session) trace.session_logits.resize(session + 1);
      trace.session_logits[session] = logits;
    } else {
      if (trace.birth_logits.size() <= session) trace.birth_logits.resize(session + 1);
      const auto [begin, end] = model.head.block_range(session);
      trace.birth_logits[session] = block_columns(logits, begin, end);
    }
  };
}

double stability_decay(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size()) {
    throw ShapeError("stability_decay: " + std::to_string(before.size()) + " reference logits vs " +
                     std::to_string(after.size()));
  }
  double d = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i] == 0.0) throw UndefinedMetric("stability_decay: zero reference logit at column " + std::to_string(i));
    const double rel = (after[i] - before[i]) / before[i];
    d += rel * rel;
  }
  return d;
}

DecayValues stability_decay(const LogitTrace& trace, std::size_t t, std::size_t T) {
  if (t > T || T > trace.sessions()) {
    throw ConfigError("stability_decay: need t <= T <= " + std::to_string(trace.sessions()) +
                      ", got t=" + std::to_string(t) + " T=" + std::to_string(T));
  }
  const Mat& final_logits = trace.session_logits[T];
  const std::size_t cols_t = trace.session_logits[t].cols();
  DecayValues out;
  Vec before(final_logits.cols());
  for (std::size_t p = 0; p < final_logits.rows(); ++p) {
    for (std::size_t i = 0; i < cols_t; ++i) before[i] = trace.session_logits[t](p, i);
    for (std::size_t b = t + 1; b <= T; ++b) {
      const std::size_t begin = trace.session_logits[b - 1].cols();
      const Mat& birth = trace.birth_logits.at(b);
      for (std::size_t j = 0; j < birth.cols(); ++j) before[begin + j] = birth(p, j);
    }
    try {
      out.per_probe.push_back(stability_decay(before, final_logits.row(p)));
    } catch (const UndefinedMetric&) {
      ++out.skipped;
    }
  }
  return out;
}

OrderingReport compare_variants(const StreamSource& source, const TrainingPreset& preset,
                                std::span<const std::uint64_t> seeds, std::size_t t) {
  if (seeds.size() < 5) throw ConfigError("compare_variants: needs at least 5 seeds");
  OrderingReport report;
  const char* names[4] = {"a", "b", "c", "d"};
  for (std::size_t v = 0; v < 4; ++v) {
    RunFlags flags = RunFlags::knowe();
    flags.normalize_weights = v == 1 || v == 3;
    flags.freeze_classifier = v >= 2;
    report.variants[v].name = names[v];
    report.variants[v].flags = flags;
  }

  const std::vector<SessionStream> streams = build_streams(source, seeds);
  for (const auto& s : streams) {
    if (s.sessions < t) {
      throw ConfigError("compare_variants: stream has " + std::to_string(s.sessions) +
                        " sessions, fewer than t=" + std::to_string(t));
    }
  }
  report.t = t;
  report.T = streams.front().sessions;

  std::vector<DecayValues> cells(seeds.size() * 4);
  kernels::for_each_job(cells.size(), [&](std::size_t job) {
    const std::size_t s = job / 4, v = job % 4;
    const SessionStream& stream = streams[s];
    LogitTrace trace;
    const Mat& probes = stream.probes.features;
    run_experiment(stream, report.variants[v].flags, preset, seeds[s], logit_recorder(probes, trace));
    cells[job] = stability_decay(trace, t, stream.sessions);
  });

  for (std::size_t v = 0; v < 4; ++v) {
    std::vector<double> pooled;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const DecayValues& d = cells[s * 4 + v];
      report.variants[v].skipped += d.skipped;
      report.variants[v].seed_median.push_back(
          d.per_probe.empty() ? std::numeric_limits<double>::quiet_NaN() : median(d.per_probe));
      pooled.insert(pooled.end(), d.per_probe.begin(), d.per_probe.end());
    }
    report.variants[v].median = pooled.empty() ? std::numeric_limits<double>::quiet_NaN() : median(pooled);
  }

  std::size_t ordered = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const double a = report.variants[0].seed_median[s], b = report.variants[1].seed_median[s];
    const double c = report.variants[2].seed_median[s], d = report.variants[3].seed_median[s];
    const bool ok = d < b && d < c && a > b && a > c;
    report.seed_ordered.push_back(ok);
    ordered += ok;
  }
  report.ordered_fraction = static_cast<double>(ordered) / static_cast<double>(seeds.size());
  const double a = report.variants[0].median, b = report.variants[1].median;
  const double c = report.variants[2].median, d = report.variants[3].median;
  report.chain_holds = d < b && b < a && d < c && c < a;
  return report;
}

// ---------------------------------------------------------------------------
// Plasticity

Mat descent_direction(const ClassifierHead& head, const Mat& features, std::span<const int> targets) {
  if (!head.normalize) throw ConfigError("descent_direction: head must be normalized");
  if (features.rows() != targets.size() || features.cols() != head.dim()) {
    throw ShapeError("descent_direction: batch does not match the head");
  }
  const std::size_t cols = head.columns(), dim = head.dim();
  const double lambda = head.temperature;
  const double n = static_cast<double>(features.rows());
  Mat grad(cols, dim);
  Vec wnorm(cols);
  for (std::size_t i = 0; i < cols; ++i) wnorm[i] = norm2(head.weights.row(i));

  Vec cosines(cols);
  for (std::size_t s = 0; s < features.rows(); ++s) {
    const auto x = features.row(s);
    const double xnorm = norm2(x);
    for (std::size_t i = 0; i < cols; ++i) cosines[i] = dot(x, head.weights.row(i)) / (xnorm * wnorm[i]);
    const Vec p = softmax(cosines, lambda);
    for (std::size_t i = 0; i < cols; ++i) {
      if (head.frozen[i]) continue;
      const auto w = head.weights.row(i);
      const double delta = static_cast<int>(i) == targets[s] ? 1.0 : 0.0;
      const double coef = (p[i] - delta) / (lambda * n);
      const double xw = dot(x, w);
      const double a = 1.0 / (xnorm * wnorm[i]);
      const double b = xw / (xnorm * wnorm[i] * wnorm[i] * wnorm[i]);
      auto g = grad.row(i);
      for (std::size_t k = 0; k < dim; ++k) g[k] += coef * (x[k] * a - w[k] * b);
    }
  }
  return grad;
}

double frobenius_inner(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("frobenius_inner: shape mismatch");
  return dot(a.flat(), b.flat());
}

PlasticityReport plasticity_probe(const ClassifierHead& head, const Mat& features,
                                  std::span<const int> targets, std::size_t session,
                                  std::span<const double> lr_grid) {
  const HeadGradient step = support_loss_grad(head, features, targets, session);
  const Mat g = descent_direction(head, features, targets);
  PlasticityReport report;
  report.inner = frobenius_inner(step.weights, g);
  report.grad_norm = norm2(g.flat());
  report.stationary = report.grad_norm < 1e-8;
  for (double lr : lr_grid) {
    const double delta = loss_after_step(head, step.weights, lr, features, targets) - step.loss;
    report.lr.push_back(lr);
    report.delta.push_back(delta);
    if (delta < 0.0 && (!report.largest_decreasing_lr || lr > *report.largest_decreasing_lr)) {
      report.largest_decreasing_lr = lr;
    }
  }
  return report;
}

PlasticitySweep plasticity_sweep(std::size_t trials, double lr, std::uint64_t seed, std::size_t dim,
                                 std::size_t coarse, std::size_t way, std::size_t shots,
                                 double temperature) {
  std::vector<double> grid{1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  if (std::find(grid.begin(), grid.end(), lr) == grid.end()) grid.push_back(lr);
  std::sort(grid.begin(), grid.end());
  const auto at = static_cast<std::size_t>(std::find(grid.begin(), grid.end(), lr) - grid.begin());

  PlasticitySweep sweep;
  sweep.trials = trials;
  sweep.reports.resize(trials);
  const Rng root(seed);
  kernels::for_each_job(trials, [&](std::size_t trial) {
    Rng rng = root.fork("plasticity/" + std::to_string(trial));
    ClassifierHead head = ClassifierHead::create(dim, coarse, true, temperature, rng);
    augment(head, way, ColumnInit{}, rng);
    Mat features(way * shots, dim);
    std::vector<int> targets(way * shots);
    for (std::size_t n = 0; n < features.rows(); ++n) {
      for (double& v : features.row(n)) v = rng.normal();
      targets[n] = static_cast<int>(coarse + n % way);
    }
    sweep.reports[trial] = plasticity_probe(head, features, targets, 1, grid);
  });

  sweep.min_inner = std::numeric_limits<double>::infinity();
  for (const auto& r : sweep.reports) {
    sweep.min_inner = std::min(sweep.min_inner, r.inner);
    if (r.stationary) {
      ++sweep.stationary;
      sweep.positive_inner += r.inner >= 0.0;
      continue;
    }
    sweep.positive_inner += r.inner > 0.0;
    sweep.decreased += r.delta[at] < 0.0;
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Weight growth

NormTrace weight_norm_trace(std::span<const SessionReport> reports) {
  NormTrace trace;
  for (std::size_t t = 1; t < reports.size(); ++t) {
    if (reports[t].block_norms.size() <= t) {
      throw ShapeError("weight_norm_trace: session " + std::to_string(t) + " report lacks its block norm");
    }
    trace.norms.push_back(reports[t].block_norms[t]);
  }
  trace.outlier.assign(trace.norms.size(), false);
  if (trace.norms.empty()) return trace;
  const double med = median(trace.norms);
  std::vector<double> dev;
  for (double v : trace.norms) dev.push_back(std::abs(v - med));
  const double mad = median(dev);
  for (std::size_t i = 0; i < trace.norms.size(); ++i) {
    trace.outlier[i] = mad > 0.0 && dev[i] > 3.0 * mad;
  }
  for (std::size_t i = 0; i + 1 < trace.norms.size(); ++i) {
    if (trace.outlier[i] || trace.outlier[i + 1]) continue;
    ++trace.pairs;
    trace.growing += trace.norms[i + 1] > trace.norms[i];
  }
  return trace;
}

GrowthReport weight_growth(const StreamSource& source, const TrainingPreset& preset,
                           std::span<const std::uint64_t> seeds) {
  RunFlags flags = RunFlags::knowe();
  flags.normalize_weights = false;
  flags.freeze_classifier = false;
  GrowthReport report;
  report.traces.resize(seeds.size());
  kernels::for_each_job(seeds.size(), [&](std::size_t i) {
    const SessionStream stream = source(seeds[i]);
    const ExperimentResult result = run_experiment(stream, flags, preset, seeds[i]);
    report.traces[i] = weight_norm_trace(result.reports);
  });
  for (const auto& t : report.traces) {
    report.pairs += t.pairs;
    report.growing += t.growing;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Ablation grid

void evaluate_truth_table(AblationReport& report) {
  const std::pair<bool, bool> order[4] = {{false, false}, {true, true}, {true, false}, {false, true}};
  for (std::size_t row = 0; row < 4; ++row) {
    const auto [p, q] = order[row];
    std::vector<double> deltas;
    std::vector<std::uint64_t> seeds;
    for (const auto& c : report.cells) {
      if (c.normalize == p && c.freeze_classifier == q && c.freeze_embedding) seeds.push_back(c.seed);
    }
    for (std::uint64_t seed : seeds) {
      double on = 0.0, off = 0.0;
      for (const auto& c : report.cells) {
        if (c.normalize != p || c.freeze_classifier != q || c.seed != seed) continue;
        (c.freeze_embedding ? on : off) = c.average_accuracy;
      }
      deltas.push_back(100.0 * (on - off));
    }
    TruthRow& r = report.rows[row];
    r.p = p;
    r.q = q;
    r.delta_points = deltas.empty() ? 0.0 : median(deltas);
    r.r = r.delta_points > report.epsilon;
  }
  report.neither_implies_r = report.rows[0].r;
  report.either_implies_not_r = !report.rows[1].r && !report.rows[2].r && !report.rows[3].r;
  report.biconditional = report.neither_implies_r && report.either_implies_not_r;
}

AblationReport ablation_grid(const StreamSource& source, const TrainingPreset& preset,
                             std::span<const std::uint64_t> seeds, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("ablation_grid: epsilon must be positive");
  AblationReport report;
  report.epsilon = epsilon;
  const std::vector<SessionStream> streams = build_streams(source, seeds);
  report.cells.resize(seeds.size() * 8);
  kernels::for_each_job(report.cells.size(), [&](std::size_t job) {
    const std::size_t s = job / 8, combo = job % 8;
    AblationCell& cell = report.cells[job];
    cell.normalize = combo & 4;
    cell.freeze_classifier = combo & 2;
    cell.freeze_embedding = combo & 1;
    cell.seed = seeds[s];
    RunFlags flags = RunFlags::knowe();
    flags.normalize_weights = cell.normalize;
    flags.freeze_classifier = cell.freeze_classifier;
    flags.freeze_embedding = cell.freeze_embedding;
    const ExperimentResult result = run_experiment(streams[s], flags, preset, seeds[s]);
    cell.average_accuracy = result.summary.average_accuracy;
    cell.forgetting = result.summary.forgetting;
  });
  evaluate_truth_table(report);
  return report;
}

// ---------------------------------------------------------------------------

double nearest_neighbor_accuracy(const Mat& train, std::span<const int> train_labels,
                                 const Mat& test, std::span<const int> test_labels) {
  if (train.rows() != train_labels.size() || test.rows() != test_labels.size()) {
    throw ShapeError("nearest_neighbor_accuracy: labels do not match rows");
  }
  if (train.rows() == 0 || test.rows() == 0) throw ConfigError("nearest_neighbor_accuracy: empty set");
  if (train.cols() != test.cols()) throw ShapeError("nearest_neighbor_accuracy: dimension mismatch");
  const Mat a = l2_normalize_rows(train);
  const Mat b = l2_normalize_rows(test);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < b.rows(); ++n) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < a.rows(); ++m) {
      const double sim = dot(a.row(m), b.row(n));
      if (sim > best_sim) {
        best_sim = sim;
        best = m;
      }
    }
    correct += train_labels[best] == test_labels[n];
  }
  return static_cast<double>(correct) / static_cast<double>(b.rows());
}

}  // namespace knowe
