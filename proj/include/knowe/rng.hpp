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
#include <string_view>
#include <utility>
#include <vector>

namespace knowe {

// Seed for the sub-stream named `purpose`: splitmix64(seed ^ fnv1a64(purpose)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

// xoshiro256** seeded through splitmix64. The integer stream is identical on
// every platform; normal() uses Box-Muller on top of it.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Unbiased integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Independent generator for a named consumer. Depends only on the seed this
  // generator was constructed with, never on how far it has advanced.
  Rng fork(std::string_view purpose) const { return Rng(derive_seed(seed_, purpose)); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  State state() const { return s_; }
  void set_state(const State& s) {
    s_ = s;
    has_spare_ = false;
  }

 private:
  std::uint64_t seed_;
  State s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace knowe
