#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "knowe/errors.hpp"
#include "knowe/report.hpp"

namespace knowe {
namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

const ExperimentResult& small_run(std::uint64_t seed = 5) {
  static std::map<std::uint64_t, ExperimentResult> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) {
    SyntheticSetup setup;
    setup.shape.sessions = 2;
    TrainingPreset preset = desk_preset();
    preset.base.epochs = 3;
    preset.session.epochs = 4;
    it = cache.emplace(seed, run_experiment(make_synthetic_stream(setup, seed), RunFlags::knowe(), preset, seed)).first;
  }
  return it->second;
}

TEST(Report, FormatNumber) {
  EXPECT_EQ(format_number(std::nullopt), "");
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(std::stod(format_number(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Report, SessionsCsv) {
  const auto& r = small_run();
  const std::string csv = sessions_csv(r.reports);
  EXPECT_EQ(first_line(csv), "t,A_c,A_f,A_t,now_acc");
  EXPECT_EQ(line_count(csv), r.reports.size() + 1);
  // Session 0 has no fine accuracy.
  EXPECT_NE(csv.find("\n0,"), std::string::npos);
}

TEST(Report, NormsCsv) {
  const auto& r = small_run();
  const std::string csv = norms_csv(r.reports);
  EXPECT_EQ(first_line(csv), "t,block,norm");
  std::size_t rows = 0;
  for (const auto& rep : r.reports) rows += rep.block_norms.size();
  EXPECT_EQ(line_count(csv), rows + 1);
}

TEST(Report, ConfusionCsv) {
  const auto& r = small_run();
  const SessionReport& last = r.reports.back();
  const std::span<const int> classes(r.model.column_class);
  const std::string csv = confusion_csv(last, classes, r.model.coarse_count);
  EXPECT_EQ(first_line(csv).rfind("true,c0,", 0), 0u);
  EXPECT_EQ(line_count(csv), last.confusion.rows() + 1);
  EXPECT_THROW(confusion_csv(last, classes.first(2), r.model.coarse_count), ShapeError);
}

TEST(Report, SummaryJson) {
  const auto& r = small_run();
  const auto j = nlohmann::json::parse(summary_json(r, RunFlags::knowe(), 5));
  EXPECT_EQ(j["seed"], 5);
  EXPECT_DOUBLE_EQ(j["A_bar"].get<double>(), r.summary.average_accuracy);
  EXPECT_EQ(j["sessions"].size(), r.reports.size());
  EXPECT_TRUE(j["sessions"][0]["A_f"].is_null());
  EXPECT_EQ(j["flags"]["mode"], "knowe");
}

TEST(Report, ByteIdenticalForTheSameSeed) {
  SyntheticSetup setup;
  setup.shape.sessions = 2;
  TrainingPreset preset = desk_preset();
  preset.base.epochs = 3;
  preset.session.epochs = 4;
  const auto again = run_experiment(make_synthetic_stream(setup, 5), RunFlags::knowe(), preset, 5);
  EXPECT_EQ(summary_json(again, RunFlags::knowe(), 5), summary_json(small_run(), RunFlags::knowe(), 5));
  EXPECT_EQ(sessions_csv(again.reports), sessions_csv(small_run().reports));
  EXPECT_EQ(norms_csv(again.reports), norms_csv(small_run().reports));
}

TEST(Report, AblationAndConjectures) {
  AblationReport rep;
  for (int combo = 0; combo < 8; ++combo) {
    AblationCell c;
    c.normalize = combo & 4;
    c.freeze_classifier = combo & 2;
    c.freeze_embedding = combo & 1;
    c.seed = 1;
    c.average_accuracy = 0.5 + 0.01 * combo;
    rep.cells.push_back(c);
  }
  evaluate_truth_table(rep);
  const std::string csv = ablation_csv(rep);
  EXPECT_EQ(first_line(csv), "seed,normalize,freeze_classifier,freeze_embedding,A_bar,F");
  EXPECT_EQ(line_count(csv), 9u);
  const auto j = nlohmann::json::parse(conjectures_json(rep));
  EXPECT_EQ(j["truth_table"].size(), 4u);
  EXPECT_EQ(j["c3"], j["biconditional"]);
  EXPECT_EQ(j["c2"].get<bool>(), rep.neither_implies_r);
}

TEST(Report, AtomicWriteCreatesDirectoriesAndReplaces) {
  const auto dir = std::filesystem::temp_directory_path() / "knowe_report_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "a" / "b.txt";
  atomic_write(path, "one");
  atomic_write(path, "two");
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(buf.str(), "two");
  EXPECT_FALSE(std::filesystem::exists(dir / "a" / "b.txt.tmp"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace knowe
