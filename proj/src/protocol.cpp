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

#include "knowe/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <utility>
#include <map>
#include <numeric>

#include "knowe/rng.hpp"

namespace knowe {
namespace {

Mat gather(const Mat& src, std::span<const std::size_t> rows) {
  Mat out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(src.row(rows[r]).begin(), src.cols(), out.row(r).begin());
  }
  return out;
}

std::map<int, std::size_t> fine_columns(const Model& model) {
  std::map<int, std::size_t> out;
  for (std::size_t c = model.coarse_count; c < model.column_class.size(); ++c) {
    out.emplace(model.column_class[c], c);
  }
  return out;
}

// Trains `trainable` columns of the head (and the trunk unless frozen) on the
// labeled rows with the session optimizer.
void fit_session(Model& model, const Mat& inputs, const std::vector<int>& targets,
                 std::size_t session, bool restrict_to_block, const RunFlags& flags,
                 const TrainingPreset& preset, Rng& shuffle_rng) {
  const OptimConfig& opt = preset.session;
  const bool train_net = !flags.freeze_embedding && !model.net.frozen;
  Mat frozen_features;
  if (!train_net) frozen_features = embed(model.net, inputs);

  Mat head_velocity;
  NetVelocity net_velocity;
  std::vector<std::size_t> order(inputs.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      std::vector<int> y(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) y[r] = targets[rows[r]];

      MlpTape tape;
      const Mat features = train_net ? mlp_forward(model.net.trunk, gather(inputs, rows), &tape)
                                     : gather(frozen_features, rows);
      HeadGradient g = restrict_to_block ? support_loss_grad(model.head, features, y, session)
                                               : cross_entropy(model.head, features, y);
      EmbeddingNet grads;
      if (train_net) {
        grads = model.net.zeros_like();
        mlp_backward(model.net.trunk, tape, g.features, grads.trunk);
        clip_gradient(grads, opt.clip_norm);
      }
      if (train_net) sgd_step(model.net, grads, net_velocity, opt);
      sgd_step(model.head, g.weights, head_velocity, opt);
    }
  }
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kKnowe: return "knowe";
    case RunMode::kFtBaseline: return "ft_baseline";
    case RunMode::kJointUpperBound: return "joint_upper_bound";
  }
  return "unknown";
}

RunMode run_mode_from_string(const std::string& text) {
  if (text == "knowe") return RunMode::kKnowe;
  if (text == "ft_baseline") return RunMode::kFtBaseline;
  if (text == "joint_upper_bound") return RunMode::kJointUpperBound;
  throw ConfigError("unknown mode '" + text + "' (expected knowe, ft_baseline or joint_upper_bound)");
}

TrainingPreset paper_preset() {
  TrainingPreset p;
  p.base = OptimConfig{0.12, 0.9, 5e-4, 256, 200, 0.2};
  p.session = OptimConfig{0.1, 0.9, 5e-4, 256, 200, 0.2};
  p.temperature = 0.5;
  return p;
}

TrainingPreset desk_preset() {
  TrainingPreset p;
  p.base = OptimConfig{0.02, 0.9, 5e-4, 64, 30, 0.2};
  p.session = OptimConfig{0.1, 0.9, 5e-4, 64, 50, 0.2, 5.0};
  p.temperature = 0.5;
  p.contrastive_weight = 8.0;
  return p;
}

TrainingPreset preset_by_name(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
}

SessionStream make_synthetic_stream(const SyntheticSetup& setup, std::uint64_t seed) {
  const Hierarchy h = build_hierarchy(setup.coarse, setup.fine_per_coarse);
  const LabeledDataset ds = generate_synthetic(h, setup.data, seed);
  return make_session_stream(ds, h, setup.shape, seed);
}

Model run_base_session(const SessionStream& stream, const RunFlags& flags,
                       const TrainingPreset& preset, std::uint64_t seed) {
  const Rng root(seed);
  Rng net_rng = root.fork("model/net");
  NetShape shape = preset.net;
  shape.input_dim = stream.base_train.size() > 0 ? stream.base_train.input_dim()
                                                 : stream.supports.front().input_dim();
  Model model;
  model.net = EmbeddingNet::create(shape, net_rng);
  model.coarse_count = stream.hierarchy.coarse_count();

  BaseTrainOptions options;
  options.contrastive = flags.contrastive_base;
  // The temporary coarse head is always cosine-normalized; a raw head trained jointly
  // with the trunk is a bilinear system that diverges at the preset learning rates.
  options.head_normalize = true;
  options.head_temperature = preset.temperature;
  options.view_sigma = preset.view_sigma;
  options.contrastive_weight = preset.contrastive_weight;
  BaseTrainResult base = train_base(model.net, stream.base_train, preset.base, stream.hierarchy,
                                    options, derive_seed(seed, "model/base"));
  model.head = std::move(base.coarse_head);
  if (!flags.normalize_weights) {
    model.head.normalize = false;
    model.head.temperature = 1.0;
  }
  // The temporary training head is discarded; each coarse column is imprinted
  // with the unit mean direction of its class's base features.
  {
    const Mat dirs = l2_normalize_rows(embed(model.net, stream.base_train.features));
    model.head.weights.fill(0.0);
    for (std::size_t n = 0; n < dirs.rows(); ++n) {
      auto w = model.head.weights.row(static_cast<std::size_t>(stream.base_train.coarse[n]));
      const auto f = dirs.row(n);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += f[i];
    }
    for (std::size_t c = 0; c < model.coarse_count; ++c) {
      auto w = model.head.weights.row(c);
      const double len = norm2(w);
      if (len < 1e-12) throw NumericError("run_base_session: coarse class " + std::to_string(c) + " has no base samples");
      for (double& v : w) v /= len;
    }
  }
  model.column_class.resize(model.coarse_count);
  std::iota(model.column_class.begin(), model.column_class.end(), 0);
  model.net.frozen = flags.freeze_embedding;
  return model;
}

void run_incremental_session(Model& model, const SessionStream& stream, std::size_t session,
                             const RunFlags& flags, const TrainingPreset& preset, std::uint64_t seed,
                             const SessionObserver* observer) {
  if (session == 0 || session > stream.sessions) {
    throw ConfigError("run_incremental_session: session " + std::to_string(session) + " out of range");
  }
  preset.session.validate();
  const Rng root(derive_seed(seed, "session/" + std::to_string(session)));
  Rng init_rng = root.fork("init");
  Rng shuffle_rng = root.fork("shuffle");

  const auto& classes = stream.session_classes[session - 1];
  augment(model.head, classes.size(), ColumnInit{}, init_rng);
  model.column_class.insert(model.column_class.end(), classes.begin(), classes.end());
  if (!flags.freeze_classifier) std::fill(model.head.frozen.begin(), model.head.frozen.end(), 0);

  if (flags.mode == RunMode::kJointUpperBound) {
    // Every fine column is re-learned from scratch on the union of supports.
    const std::size_t dim = model.head.dim();
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t c = model.coarse_count; c < model.head.columns(); ++c) {
      for (double& v : model.head.weights.row(c)) v = sigma * init_rng.normal();
      model.head.frozen[c] = 0;
    }
  }
  if (observer && *observer) (*observer)(model, session, SessionEvent::kAugmented);

  const auto columns = fine_columns(model);
  Mat inputs;
  std::vector<int> targets;
  const std::size_t first = flags.mode == RunMode::kJointUpperBound ? 1 : session;
  for (std::size_t s = first; s <= session; ++s) {
    const LabeledDataset& support = stream.supports[s - 1];
    for (std::size_t n = 0; n < support.size(); ++n) {
      inputs.append_row(support.features.row(n));
      targets.push_back(static_cast<int>(columns.at(support.fine[n])));
    }
  }
  if (!inputs.empty()) {
    fit_session(model, inputs, targets, session, flags.mode != RunMode::kJointUpperBound, flags,
                preset, shuffle_rng);
  }
  if (observer && *observer) (*observer)(model, session, SessionEvent::kTrained);
}

SessionReport evaluate(const Model& model, const QuerySet& queries, std::size_t session) {
  if (queries.size() == 0) throw ConfigError("evaluate: empty query set");
  const auto columns = fine_columns(model);
  const std::size_t cols = model.head.columns();

  SessionReport report;
  report.session = session;
  report.confusion = Mat(cols, cols);
  const Mat logit = batch_logits(model.head, embed(model.net, queries.features));

  std::size_t coarse_ok = 0, fine_ok = 0, now_ok = 0, now_total = 0;
  std::size_t now_begin = cols, now_end = cols;
  if (session > 0 && session < model.head.blocks()) {
    std::tie(now_begin, now_end) = model.head.block_range(session);
  }
  for (std::size_t n = 0; n < queries.size(); ++n) {
    std::size_t truth;
    if (queries.level[n] == Granularity::kCoarse) {
      truth = static_cast<std::size_t>(queries.coarse[n]);
      ++report.coarse_queries;
    } else {
      const auto it = columns.find(queries.fine[n]);
      if (it == columns.end()) {
        throw LabelError("evaluate: fine class " + std::to_string(queries.fine[n]) + " has no column");
      }
      truth = it->second;
      ++report.fine_queries;
    }
    const std::size_t predicted = argmax(logit.row(n));
    report.confusion(truth, predicted) += 1.0;
    const bool ok = predicted == truth;
    if (queries.level[n] == Granularity::kCoarse) {
      coarse_ok += ok;
    } else {
      fine_ok += ok;
      if (truth >= now_begin && truth < now_end) {
        ++now_total;
        now_ok += ok;
      }
    }
  }
  if (report.coarse_queries > 0) {
    report.coarse_acc = static_cast<double>(coarse_ok) / static_cast<double>(report.coarse_queries);
  }
  if (report.fine_queries > 0) {
    report.fine_acc = static_cast<double>(fine_ok) / static_cast<double>(report.fine_queries);
  }
  if (now_total > 0) report.now_acc = static_cast<double>(now_ok) / static_cast<double>(now_total);
  report.total_acc = static_cast<double>(coarse_ok + fine_ok) / static_cast<double>(queries.size());
  for (std::size_t b = 0; b < model.head.blocks(); ++b) {
    report.block_norms.push_back(frobenius_block_norm(model.head, b));
  }
  return report;
}

ExperimentSummary summarize(const std::vector<SessionReport>& reports, const SessionStream& stream) {
  ExperimentSummary out;
  MetricSeries& s = out.series;
  s.fine_total = stream.hierarchy.fine_count();
  for (const auto& r : reports) {
    s.total.push_back(r.total_acc);
    s.coarse.push_back(r.coarse_acc);
    s.fine.push_back(r.session == 0 ? std::nullopt : r.fine_acc);
    s.seen_fine.push_back(stream.seen_fine(r.session));
  }
  out.average_accuracy = average_accuracy(s.total);
  const std::size_t T = s.sessions();
  out.fine_forgetting.assign(T + 1, std::nullopt);
  out.coarse_forgetting.assign(T + 1, std::nullopt);
  for (std::size_t t = 2; t <= T; ++t) {
    if (s.fine[t - 1] && s.fine[t]) {
      try {
        out.fine_forgetting[t] = fine_forgetting(*s.fine[t - 1], *s.fine[t]);
      } catch (const UndefinedMetric&) {
      }
    }
  }
  for (std::size_t t = 1; t + 1 <= T; ++t) {
    if (s.coarse[0] && s.coarse[t]) {
      try {
        out.coarse_forgetting[t] = coarse_forgetting(*s.coarse[0], *s.coarse[t]);
      } catch (const UndefinedMetric&) {
      }
    }
  }
  if (T >= 2) {
    try {
      out.forgetting = overall_forgetting(s);
    } catch (const UndefinedMetric&) {
    }
  }
  return out;
}

ExperimentResult run_experiment(const SessionStream& stream, const RunFlags& flags,
                                const TrainingPreset& preset, std::uint64_t seed,
                                const SessionObserver& observer) {
  ExperimentResult result;
  result.model = run_base_session(stream, flags, preset, seed);
  if (observer) observer(result.model, 0, SessionEvent::kTrained);
  result.reports.push_back(evaluate(result.model, stream.queries[0], 0));
  for (std::size_t t = 1; t <= stream.sessions; ++t) {
    run_incremental_session(result.model, stream, t, flags, preset, seed, &observer);
    result.reports.push_back(evaluate(result.model, stream.queries[t], t));
  }
  result.summary = summarize(result.reports, stream);
  return result;
}

}  // namespace knowe
