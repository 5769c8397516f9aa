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

#include "knowe/cli.hpp"

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "knowe/analysis.hpp"
#include "knowe/checkpoint.hpp"
#include "knowe/errors.hpp"
#include "knowe/kernels.hpp"
#include "knowe/report.hpp"

namespace knowe {
namespace {

StreamSource config_source(const RunConfig& config) {
  return [config](std::uint64_t seed) { return build_stream(config, seed); };
}

// Writes a feature CSV through a temporary file.
void write_features(const LabeledDataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  export_feature_file(ds, tmp);
  std::filesystem::rename(tmp, path);
}

}  // namespace

void cmd_run(const RunConfig& config) {
  const SessionStream stream = build_stream(config, config.seed);
  const ExperimentResult result = run_experiment(stream, config.flags, config.training, config.seed);

  const auto& out = config.out;
  atomic_write(out / "sessions.csv", sessions_csv(result.reports));
  atomic_write(out / "summary.json", summary_json(result, config.flags, config.seed));
  atomic_write(out / "norms.csv", norms_csv(result.reports));
  const std::span<const int> classes(result.model.column_class);
  for (const SessionReport& r : result.reports) {
    atomic_write(out / ("confusion_t" + std::to_string(r.session) + ".csv"),
                 confusion_csv(r, classes.first(r.confusion.rows()), result.model.coarse_count));
  }

  Checkpoint ckpt;
  ckpt.model = result.model;
  ckpt.flags = config.flags;
  ckpt.seed = config.seed;
  ckpt.sessions_completed = static_cast<std::uint32_t>(stream.sessions);
  ckpt.rng = Rng(config.seed).state();
  save_checkpoint(out / "model.knwe", ckpt);

  std::cout << "A_bar " << format_number(result.summary.average_accuracy) << "  F "
            << (result.summary.forgetting ? format_number(result.summary.forgetting) : "undefined")
            << "\n";
}

void cmd_ablate(const RunConfig& config) {
  const AblationReport report = ablation_grid(config_source(config), config.training,
                                              config.analysis.seeds, config.analysis.epsilon);
  atomic_write(config.out / "ablation.csv", ablation_csv(report));
  atomic_write(config.out / "conjectures.json", conjectures_json(report));
  std::cout << "c2 " << report.neither_implies_r << "  c4 " << report.either_implies_not_r
            << "  biconditional " << report.biconditional << "\n";
}

void cmd_analyze(const RunConfig& config) {
  const auto& seeds = config.analysis.seeds;
  if (seeds.size() < 5) {
    throw ConfigError("analyze needs at least 5 seeds in analysis.seeds, got " + std::to_string(seeds.size()));
  }
  const StreamSource source = config_source(config);
  const OrderingReport stability =
      compare_variants(source, config.training, seeds, config.analysis.stability_t);
  const PlasticitySweep plasticity = plasticity_sweep(
      config.analysis.plasticity_trials, config.analysis.plasticity_lr, config.seed,
      config.training.net.feature_dim, config.dataset.coarse, config.stream.way, config.stream.shots,
      config.training.temperature);
  const GrowthReport growth = weight_growth(source, config.training, seeds);

  atomic_write(config.out / "stability.csv", stability_csv(stability));
  atomic_write(config.out / "plasticity.csv", plasticity_csv(plasticity, config.analysis.plasticity_lr));
  atomic_write(config.out / "norm_trace.csv", norm_trace_csv(growth, seeds));
  atomic_write(config.out / "analysis.json", analysis_json(stability, plasticity, growth));
  std::cout << "ordered " << format_number(stability.ordered_fraction) << "  descent "
            << plasticity.decreased << "/" << plasticity.trials - plasticity.stationary << "  growth "
            << format_number(growth.growth_fraction()) << "\n";
}

void cmd_gen_data(const RunConfig& config) {
  if (config.dataset.feature_file) {
    throw ConfigError("gen-data generates synthetic samples; remove dataset.feature_file");
  }
  const Hierarchy h = build_hierarchy(config.dataset.coarse, config.dataset.fine_per_coarse);
  write_features(generate_synthetic(h, config.dataset.synthetic, config.seed), config.out / "dataset.csv");
}

void cmd_export_features(const RunConfig& config, const std::filesystem::path& checkpoint,
                         const std::optional<std::filesystem::path>& input) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LabeledDataset ds;
  if (input) {
    ds = load_feature_file(*input).second;
  } else if (config.dataset.feature_file) {
    ds = load_feature_file(*config.dataset.feature_file).second;
  } else {
    const Hierarchy h = build_hierarchy(config.dataset.coarse, config.dataset.fine_per_coarse);
    ds = generate_synthetic(h, config.dataset.synthetic, config.seed);
  }
  if (ds.input_dim() != ckpt.model.net.input_dim()) {
    throw ShapeError("export-features: samples have " + std::to_string(ds.input_dim()) +
                     " features, the checkpoint expects " + std::to_string(ckpt.model.net.input_dim()));
  }
  ds.features = embed(ckpt.model.net, ds.features);
  write_features(ds, config.out / "features.csv");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine few-shot class-incremental learning lab"};
  app.require_subcommand(1);

  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> flags;
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> input;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config");
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--preset", preset, "Hyperparameter preset")->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--flags", flags, "Flag overrides, e.g. normalize_weights=false,mode=ft_baseline");
  };
  CLI::App* run = app.add_subcommand("run", "Run one experiment and write per-session reports");
  CLI::App* ablate = app.add_subcommand("ablate", "Run the 8-way freeze/normalize grid");
  CLI::App* analyze = app.add_subcommand("analyze", "Stability, plasticity and weight-growth analyses");
  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as a feature CSV");
  CLI::App* exp = app.add_subcommand("export-features", "Embed samples through a saved checkpoint");
  for (CLI::App* sub : {run, ablate, analyze, gen, exp}) common(sub);
  exp->add_option("--checkpoint", checkpoint, "Checkpoint written by run")->required();
  exp->add_option("--input", input, "Feature CSV to embed (default: the configured dataset)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    kernels::apply_thread_env();
    ConfigOverrides overrides{preset, seed, out, flags};
    const RunConfig config = config_path ? load_config(*config_path, overrides) : default_config(overrides);
    if (run->parsed()) cmd_run(config);
    else if (ablate->parsed()) cmd_ablate(config);
    else if (analyze->parsed()) cmd_analyze(config);
    else if (gen->parsed()) cmd_gen_data(config);
    else cmd_export_features(config, checkpoint, input);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace knowe
