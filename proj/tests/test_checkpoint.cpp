#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "knowe/checkpoint.hpp"
#include "knowe/errors.hpp"

namespace knowe {
namespace {

struct Trained {
  SessionStream stream;
  ExperimentResult result;
};

const Trained& trained() {
  static const Trained t = [] {
    SyntheticSetup setup;
    setup.shape.sessions = 2;
    TrainingPreset preset = desk_preset();
    preset.base.epochs = 4;
    preset.session.epochs = 5;
    Trained out;
    out.stream = make_synthetic_stream(setup, 11);
    out.result = run_experiment(out.stream, RunFlags::knowe(), preset, 11);
    return out;
  }();
  return t;
}

Checkpoint make_checkpoint() {
  Checkpoint c;
  c.model = trained().result.model;
  c.flags = RunFlags::knowe();
  c.flags.freeze_classifier = false;
  c.seed = 11;
  c.sessions_completed = 2;
  c.rng = Rng(11).state();
  return c;
}

void expect_same_report(const SessionReport& a, const SessionReport& b) {
  EXPECT_EQ(a.coarse_acc, b.coarse_acc);
  EXPECT_EQ(a.fine_acc, b.fine_acc);
  EXPECT_EQ(a.total_acc, b.total_acc);
  EXPECT_EQ(a.block_norms, b.block_norms);
  EXPECT_EQ(a.confusion.flat().size(), b.confusion.flat().size());
  for (std::size_t i = 0; i < a.confusion.size(); ++i) EXPECT_EQ(a.confusion.flat()[i], b.confusion.flat()[i]);
}

TEST(Checkpoint, RoundTripEvaluatesIdentically) {
  const Checkpoint c = make_checkpoint();
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_EQ(back.flags, c.flags);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.sessions_completed, c.sessions_completed);
  EXPECT_EQ(back.rng, c.rng);
  EXPECT_EQ(back.model.column_class, c.model.column_class);
  EXPECT_EQ(back.model.head.frozen, c.model.head.frozen);
  const Model rounded = round_to_stored_precision(c.model);
  for (std::size_t t = 0; t <= trained().stream.sessions; ++t) {
    expect_same_report(evaluate(back.model, trained().stream.queries[t], t),
                       evaluate(rounded, trained().stream.queries[t], t));
  }
}

TEST(Checkpoint, EncodingIsStable) {
  const std::string bytes = encode_checkpoint(make_checkpoint());
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
  EXPECT_EQ(bytes.substr(0, 4), "KNWE");
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "knowe_ckpt_test";
  std::filesystem::remove_all(dir);
  const Checkpoint c = make_checkpoint();
  save_checkpoint(dir / "m.knwe", c);
  EXPECT_FALSE(std::filesystem::exists(dir / "m.knwe.tmp"));
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "m.knwe")), encode_checkpoint(c));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const std::string bytes = encode_checkpoint(make_checkpoint());
  for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 16) {
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, n)), FormatError) << n;
  }
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST(Checkpoint, TrailingBytesAreRejected) {
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(make_checkpoint()) + "x"), FormatError);
}

TEST(Checkpoint, BadMagic) {
  std::string bytes = encode_checkpoint(make_checkpoint());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  std::string bytes = encode_checkpoint(make_checkpoint());
  bytes[4] = static_cast<char>(kCheckpointVersion + 6);
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion + 6)), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion)), std::string::npos) << msg;
  }
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_checkpoint("/nonexistent/m.knwe"), Error);
}

}  // namespace
}  // namespace knowe
