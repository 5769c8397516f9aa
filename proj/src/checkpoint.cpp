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

#include "knowe/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "knowe/errors.hpp"
#include "knowe/report.hpp"

namespace knowe {
namespace {

constexpr char kMagic[4] = {'K', 'N', 'W', 'E'};

class Writer {
 public:
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void size(std::size_t v) {
    if (v > 0xffffffffu) throw FormatError("checkpoint: dimension " + std::to_string(v) + " does not fit in u32");
    u32(static_cast<std::uint32_t>(v));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Cursor {
 public:
  explicit Cursor(const std::string& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  bool flag(const char* what) {
    const std::uint8_t v = u8(what);
    if (v > 1) throw FormatError(std::string("checkpoint: ") + what + " byte is " + std::to_string(v) + ", expected 0 or 1");
    return v == 1;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_shapes(Writer& w, const Mlp& mlp) {
  w.size(mlp.layers.size());
  for (const DenseLayer& l : mlp.layers) {
    w.size(l.weight.rows());
    w.size(l.weight.cols());
  }
}

void write_params(Writer& w, const Mlp& mlp) {
  for (const DenseLayer& l : mlp.layers) {
    for (double v : l.weight.flat()) w.f32(v);
    for (double v : l.bias) w.f32(v);
  }
}

// Shapes only; parameters are filled later. Rejects shapes that would need more
// bytes than the file has left.
Mlp read_shapes(Cursor& c, const char* which) {
  const std::uint32_t count = c.u32(which);
  c.need(static_cast<std::size_t>(count) * 8, which);
  Mlp mlp;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t out = c.u32(which);
    const std::size_t in = c.u32(which);
    if (i > 0 && in != mlp.layers.back().weight.rows()) {
      throw FormatError(std::string("checkpoint: ") + which + " layer " + std::to_string(i) +
                        " expects " + std::to_string(in) + " inputs but the previous layer has " +
                        std::to_string(mlp.layers.back().weight.rows()) + " outputs");
    }
    c.need((out * in + out) * 4, which);
    DenseLayer l;
    l.weight = Mat(out, in);
    l.bias.assign(out, 0.0);
    mlp.layers.push_back(std::move(l));
  }
  return mlp;
}

std::size_t param_count(const Mlp& mlp) {
  std::size_t n = 0;
  for (const DenseLayer& l : mlp.layers) n += l.weight.size() + l.bias.size();
  return n;
}

void read_params(Cursor& c, Mlp& mlp) {
  for (DenseLayer& l : mlp.layers) {
    for (double& v : l.weight.flat()) v = c.f32("parameters");
    for (double& v : l.bias) v = c.f32("parameters");
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  const ClassifierHead& head = m.head;
  if (m.column_class.size() != head.columns() || head.frozen.size() != head.columns()) {
    throw ShapeError("encode_checkpoint: head has " + std::to_string(head.columns()) + " columns, " +
                     std::to_string(m.column_class.size()) + " column classes and " +
                     std::to_string(head.frozen.size()) + " frozen flags");
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  write_shapes(w, m.net.trunk);
  write_shapes(w, m.net.projection);
  w.size(head.columns());
  w.size(head.dim());
  w.size(head.blocks());
  for (std::size_t off : head.block_offsets) w.size(off);
  w.size(m.coarse_count);
  for (int c : m.column_class) w.u32(static_cast<std::uint32_t>(c));
  for (std::uint8_t f : head.frozen) w.u8(f ? 1 : 0);
  w.u8(m.net.frozen);
  w.u8(head.normalize);
  w.f32(head.temperature);
  w.u8(ckpt.flags.contrastive_base);
  w.u8(ckpt.flags.freeze_embedding);
  w.u8(ckpt.flags.normalize_weights);
  w.u8(ckpt.flags.freeze_classifier);
  w.u8(static_cast<std::uint8_t>(ckpt.flags.mode));
  w.u64(ckpt.seed);
  w.u32(ckpt.sessions_completed);
  for (std::uint64_t s : ckpt.rng) w.u64(s);
  write_params(w, m.net.trunk);
  write_params(w, m.net.projection);
  for (double v : head.weights.flat()) w.f32(v);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Cursor c(bytes);
  c.need(4, "magic");
  if (bytes.compare(0, 4, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic bytes, expected KNWE");
  for (int i = 0; i < 4; ++i) (void)c.u8("magic");
  const std::uint32_t version = c.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) +
                      " is not supported; this build reads version " + std::to_string(kCheckpointVersion));
  }

  Checkpoint ckpt;
  Model& m = ckpt.model;
  m.net.trunk = read_shapes(c, "trunk shapes");
  m.net.projection = read_shapes(c, "projection shapes");
  if (!m.net.trunk.layers.empty() && !m.net.projection.layers.empty() &&
      m.net.projection.in_dim() != m.net.trunk.out_dim()) {
    throw FormatError("checkpoint: projection input " + std::to_string(m.net.projection.in_dim()) +
                      " does not match feature dim " + std::to_string(m.net.trunk.out_dim()));
  }

  const std::size_t columns = c.u32("head columns");
  const std::size_t dim = c.u32("head dim");
  const std::size_t blocks = c.u32("block count");
  if (dim != m.net.feature_dim()) {
    throw FormatError("checkpoint: head dim " + std::to_string(dim) + " does not match feature dim " +
                      std::to_string(m.net.feature_dim()));
  }
  c.need((blocks + 1) * 4 + 4 + columns * 5, "head layout");
  ClassifierHead& head = m.head;
  for (std::size_t b = 0; b <= blocks; ++b) head.block_offsets.push_back(c.u32("block offsets"));
  for (std::size_t b = 0; b < blocks; ++b) {
    if (head.block_offsets[b] > head.block_offsets[b + 1]) throw FormatError("checkpoint: block offsets are not sorted");
  }
  if (blocks > 0 && (head.block_offsets.front() != 0 || head.block_offsets.back() != columns)) {
    throw FormatError("checkpoint: block offsets do not cover the " + std::to_string(columns) + " columns");
  }
  m.coarse_count = c.u32("coarse count");
  m.column_class.resize(columns);
  for (int& k : m.column_class) k = static_cast<int>(c.u32("column classes"));
  head.frozen.resize(columns);
  for (std::uint8_t& f : head.frozen) f = c.flag("frozen mask") ? 1 : 0;
  m.net.frozen = c.flag("embedding frozen");
  head.normalize = c.flag("head normalize");
  head.temperature = c.f32("temperature");

  ckpt.flags.contrastive_base = c.flag("contrastive_base");
  ckpt.flags.freeze_embedding = c.flag("freeze_embedding");
  ckpt.flags.normalize_weights = c.flag("normalize_weights");
  ckpt.flags.freeze_classifier = c.flag("freeze_classifier");
  const std::uint8_t mode = c.u8("mode");
  if (mode > static_cast<std::uint8_t>(RunMode::kJointUpperBound)) {
    throw FormatError("checkpoint: unknown run mode " + std::to_string(mode));
  }
  ckpt.flags.mode = static_cast<RunMode>(mode);
  ckpt.seed = c.u64("seed");
  ckpt.sessions_completed = c.u32("sessions completed");
  for (std::uint64_t& s : ckpt.rng) s = c.u64("rng state");

  const std::size_t params = param_count(m.net.trunk) + param_count(m.net.projection) + columns * dim;
  if (c.remaining() < params * 4) {
    throw FormatError("checkpoint truncated: " + std::to_string(params) + " parameters need " +
                      std::to_string(params * 4) + " bytes, " + std::to_string(c.remaining()) + " left");
  }
  if (c.remaining() > params * 4) {
    throw FormatError("checkpoint has " + std::to_string(c.remaining() - params * 4) +
                      " trailing bytes after the parameters");
  }
  read_params(c, m.net.trunk);
  read_params(c, m.net.projection);
  head.weights = Mat(columns, dim);
  for (double& v : head.weights.flat()) v = c.f32("head weights");
  return ckpt;
}

Model round_to_stored_precision(Model model) {
  auto round = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto p : model.net.parameters()) {
    for (double& v : p) v = round(v);
  }
  for (double& v : model.head.weights.flat()) v = round(v);
  model.head.temperature = round(model.head.temperature);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  atomic_write(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace knowe
