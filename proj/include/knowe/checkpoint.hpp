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

#include <cstdint>
#include <filesystem>
#include <string>

#include "knowe/protocol.hpp"
#include "knowe/rng.hpp"

namespace knowe {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers and floats little-endian:
//
//   "KNWE"                       4 bytes
//   u32 version
//   u32 trunk layer count L, then L x (u32 out, u32 in)
//   u32 projection layer count P, then P x (u32 out, u32 in)
//   u32 head columns M, u32 head dim D, u32 block count B, (B+1) x u32 offsets
//   u32 coarse count, M x i32 column class
//   M x u8 frozen mask
//   u8 embedding frozen, u8 head normalize, f32 temperature
//   u8 contrastive_base, u8 freeze_embedding, u8 normalize_weights,
//   u8 freeze_classifier, u8 mode
//   u64 seed, u32 sessions completed, 4 x u64 RNG state
//   f32 parameters: trunk layers in order (weight row-major, then bias),
//     projection layers likewise, then head weights row-major
//
// Nothing may follow the last parameter.
struct Checkpoint {
  Model model;
  RunFlags flags;
  std::uint64_t seed = 0;
  std::uint32_t sessions_completed = 0;
  Rng::State rng{};
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// FormatError on bad magic, a different version, truncation or trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

// Writes through a temporary file and a rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters of `model` rounded to float32, as a load would return them.
Model round_to_stored_precision(Model model);

}  // namespace knowe
