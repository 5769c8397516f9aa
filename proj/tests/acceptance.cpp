// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero if
// any selected criterion fails. `--criterion N` runs a single one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knowe/analysis.hpp"
#include "knowe/checkpoint.hpp"
#include "knowe/errors.hpp"
#include "knowe/kernels.hpp"
#include "knowe/metrics.hpp"
#include "knowe/report.hpp"
#include "oracles.hpp"

namespace knowe {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s(n);
  std::iota(s.begin(), s.end(), 1);
  return s;
}

Outcome metric_exactness() {
  const std::vector<double> cifar{72.07, 36.00, 28.13, 30.27, 32.20, 31.20,
                                  30.93, 36.33, 39.27, 43.20, 43.93};
  const std::vector<double> living17{94.21, 63.63, 50.88, 43.82, 42.84, 40.29, 47.75, 53.53};
  const double a = average_accuracy(cifar), b = average_accuracy(living17);
  return {std::abs(a - 38.50) <= 0.005 && std::abs(b - 54.62) <= 0.005,
          "CIFAR-100 " + fmt(a, 6) + " (38.50), living17 " + fmt(b, 6) + " (54.62)"};
}

Outcome gradient_oracles() {
  using namespace testing;
  const std::size_t n = 60;
  const std::vector<std::pair<std::string, OracleResult>> results{
      {"contrastive", contrastive_oracle(n, 1)},
      {"coarse_ce_raw", coarse_ce_oracle(n, 2, false)},
      {"coarse_ce_cos", coarse_ce_oracle(n, 3, true)},
      {"session_ce_l1", session_ce_oracle(n, 4, 1.0)},
      {"session_ce_l0.5", session_ce_oracle(n, 5, 0.5)},
      {"dw_l1", descent_direction_oracle(n, 6, 1.0)},
      {"dw_l0.5", descent_direction_oracle(n, 7, 0.5)},
      {"base_loss", base_loss_oracle(n, 8)},
  };
  bool pass = true;
  std::string detail;
  for (const auto& [name, r] : results) {
    pass = pass && r.instances >= 50 && r.max_rel_error < 1e-4;
    detail += name + " " + fmt(r.max_rel_error, 2) + " ";
  }
  return {pass, detail + "(max rel error, " + std::to_string(n) + " instances each)"};
}

Outcome plasticity() {
  const PlasticitySweep s = plasticity_sweep(100, 1e-3, 1);
  const std::size_t active = s.trials - s.stationary;
  const bool pass = s.trials == 100 && s.decreased == active && s.positive_inner == s.trials && s.min_inner > 0.0;
  return {pass, "descent " + std::to_string(s.decreased) + "/" + std::to_string(active) +
                    " non-stationary, <dW,g> > 0 in " + std::to_string(s.positive_inner) + "/" +
                    std::to_string(s.trials) + ", min inner " + fmt(s.min_inner, 3)};
}

Outcome stability_ordering() {
  const auto seeds = seed_range(10);
  const OrderingReport r = compare_variants(synthetic_source(SyntheticSetup{}), desk_preset(), seeds, 1);
  std::string detail = "ordered on " + fmt(100.0 * r.ordered_fraction, 3) + "% of seeds (need 90); median D";
  for (const auto& v : r.variants) detail += " " + v.name + "=" + fmt(v.median, 3);
  return {r.ordered_fraction >= 0.9, detail};
}

Outcome weight_growth_check() {
  const auto seeds = seed_range(10);
  const StreamSource source = synthetic_source(SyntheticSetup{});
  const GrowthReport trained = weight_growth(source, desk_preset(), seeds);
  TrainingPreset control = desk_preset();
  control.session.epochs = 0;
  const GrowthReport untrained = weight_growth(source, control, seeds);
  const bool pass = trained.growth_fraction() >= 0.9 && untrained.growth_fraction() < 0.9;
  return {pass, "growth " + std::to_string(trained.growing) + "/" + std::to_string(trained.pairs) + " (" +
                    fmt(trained.growth_fraction(), 3) + "), epochs-0 control " +
                    std::to_string(untrained.growing) + "/" + std::to_string(untrained.pairs) + " (" +
                    fmt(untrained.growth_fraction(), 3) + ")"};
}

Outcome forgetting_collapse() {
  bool pass = true;
  double worst_ft = 0.0, worst_ratio = 1e9;
  for (std::uint64_t seed : seed_range(5)) {
    const SessionStream s = make_synthetic_stream(SyntheticSetup{}, seed);
    const auto ft = run_experiment(s, RunFlags::ft_baseline(), desk_preset(), seed);
    const auto kn = run_experiment(s, RunFlags::knowe(), desk_preset(), seed);
    const double ft2 = ft.reports[2].coarse_acc.value();
    worst_ft = std::max(worst_ft, ft2);
    pass = pass && ft2 < 0.05;
    const double base = kn.reports[0].coarse_acc.value();
    for (std::size_t t = 1; t < s.sessions; ++t) {
      const double ratio = kn.reports[t].coarse_acc.value() / base;
      worst_ratio = std::min(worst_ratio, ratio);
      pass = pass && ratio > 0.5;
    }
  }
  return {pass, "ft_baseline coarse at session 2 at most " + fmt(100.0 * worst_ft, 3) +
                    "%, Knowe coarse through T-1 at least " + fmt(100.0 * worst_ratio, 3) +
                    "% of base (5 seeds)"};
}

Outcome ablation_ordering() {
  const auto seeds = seed_range(5);
  RunFlags no_norm = RunFlags::knowe(), no_freeze = RunFlags::knowe();
  no_norm.normalize_weights = false;
  no_freeze.freeze_classifier = false;
  const std::vector<RunFlags> variants{RunFlags::knowe(), no_norm, no_freeze, RunFlags::joint_upper_bound()};
  std::vector<std::vector<double>> a(4), f(4);
  bool defined = true;
  std::vector<SessionStream> streams;
  for (std::uint64_t seed : seeds) streams.push_back(make_synthetic_stream(SyntheticSetup{}, seed));
  std::vector<ExperimentResult> results(seeds.size() * variants.size());
  kernels::for_each_job(results.size(), [&](std::size_t job) {
    const std::size_t s = job / variants.size(), v = job % variants.size();
    results[job] = run_experiment(streams[s], variants[v], desk_preset(), seeds[s]);
  });
  for (std::size_t job = 0; job < results.size(); ++job) {
    const std::size_t v = job % variants.size();
    a[v].push_back(100.0 * results[job].summary.average_accuracy);
    if (results[job].summary.forgetting) f[v].push_back(*results[job].summary.forgetting);
    else if (v < 3) defined = false;
  }
  if (!defined) return {false, "forgetting undefined for some run"};
  const double ak = median(a[0]), an = median(a[1]), af = median(a[2]), aj = median(a[3]);
  const double fk = median(f[0]), fn = median(f[1]), ff = median(f[2]);
  const bool pass = ak > an && ak > af && fk < fn && fk < ff && aj >= ak - 2.0;
  return {pass, "median A_bar Knowe " + fmt(ak) + " no-norm " + fmt(an) + " no-freeze " + fmt(af) +
                    " joint " + fmt(aj) + "; F Knowe " + fmt(fk, 3) + " no-norm " + fmt(fn, 3) +
                    " no-freeze " + fmt(ff, 3)};
}

bool same_report(const SessionReport& a, const SessionReport& b) {
  return a.coarse_acc == b.coarse_acc && a.fine_acc == b.fine_acc && a.total_acc == b.total_acc &&
         a.now_acc == b.now_acc && a.block_norms == b.block_norms &&
         std::equal(a.confusion.flat().begin(), a.confusion.flat().end(), b.confusion.flat().begin(),
                    b.confusion.flat().end());
}

std::string all_reports(const ExperimentResult& r, std::uint64_t seed) {
  std::string out = sessions_csv(r.reports) + summary_json(r, RunFlags::knowe(), seed) + norms_csv(r.reports);
  const std::span<const int> classes(r.model.column_class);
  for (const SessionReport& rep : r.reports) {
    out += confusion_csv(rep, classes.first(rep.confusion.rows()), r.model.coarse_count);
  }
  return out;
}

Outcome determinism() {
  const std::uint64_t seed = 3;
  const SessionStream s1 = make_synthetic_stream(SyntheticSetup{}, seed);
  const SessionStream s2 = make_synthetic_stream(SyntheticSetup{}, seed);
  const auto r1 = run_experiment(s1, RunFlags::knowe(), desk_preset(), seed);
  const auto r2 = run_experiment(s2, RunFlags::knowe(), desk_preset(), seed);
  const bool identical = all_reports(r1, seed) == all_reports(r2, seed);

  Checkpoint c;
  c.model = r1.model;
  c.flags = RunFlags::knowe();
  c.seed = seed;
  c.sessions_completed = static_cast<std::uint32_t>(s1.sessions);
  c.rng = Rng(seed).state();
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  const Model rounded = round_to_stored_precision(r1.model);
  bool preserved = true;
  double max_acc_shift = 0.0;
  for (std::size_t t = 0; t <= s1.sessions; ++t) {
    const SessionReport loaded = evaluate(back.model, s1.queries[t], t);
    preserved = preserved && same_report(loaded, evaluate(rounded, s1.queries[t], t));
    max_acc_shift = std::max(max_acc_shift, std::abs(loaded.total_acc - evaluate(r1.model, s1.queries[t], t).total_acc));
  }
  return {identical && preserved, std::string("reports ") + (identical ? "byte-identical" : "DIFFER") +
                                      ", checkpoint evaluation " + (preserved ? "preserved" : "CHANGED") +
                                      " at float32 (max A_t shift vs float64 model " + fmt(max_acc_shift, 3) + ")"};
}

Outcome metric_units() {
  MetricSeries s;
  s.total = {0.9, 0.5, 0.3};
  s.coarse = {0.9, 0.45, std::nullopt};
  s.fine = {std::nullopt, 0.6, 0.3};
  s.seen_fine = {0, 2, 4};
  s.fine_total = 4;
  const double f = overall_forgetting(s);
  bool pass = std::abs(f - 0.75) <= 1e-12;
  pass = pass && std::abs(fine_forgetting(0.6, 0.3) - 0.5) <= 1e-12;
  pass = pass && std::abs(coarse_forgetting(0.9, 0.45) - 0.5) <= 1e-12;
  double worst = 0.0;
  for (double a : {0.1, 0.37, 0.5, 0.93}) {
    MetricSeries c;
    for (std::size_t t = 0; t <= 6; ++t) {
      c.total.push_back(a);
      c.coarse.push_back(t < 6 ? std::optional<double>(a) : std::nullopt);
      c.fine.push_back(t > 0 ? std::optional<double>(a) : std::nullopt);
      c.seen_fine.push_back(3 * t);
    }
    c.fine_total = 18;
    worst = std::max({worst, std::abs(overall_forgetting(c)), std::abs(average_accuracy(c.total) - a)});
  }
  pass = pass && worst <= 1e-12;
  return {pass, "worked example F = " + fmt(f, 17) + ", constant series max error " + fmt(worst, 3)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace knowe

int main(int argc, char** argv) {
  using namespace knowe;
  CLI::App app{"Acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  kernels::apply_thread_env();

  const std::vector<Criterion> criteria{
      {1, "metric exactness", metric_exactness},
      {2, "gradient oracles", gradient_oracles},
      {3, "plasticity descent", plasticity},
      {4, "stability ordering", stability_ordering},
      {5, "weight growth", weight_growth_check},
      {6, "forgetting collapse", forgetting_collapse},
      {7, "ablation ordering", ablation_ordering},
      {8, "metric unit suite", metric_units},
      {9, "determinism and persistence", determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
