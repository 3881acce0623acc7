// include/sita/random.h

// Copyright 2026  The sita-desk authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SITA_RANDOM_H_
#define SITA_RANDOM_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sita {

// Seeded generator with platform-independent draws. The standard library
// distributions are implementation-defined, so every draw used by the corpus,
// the miner and the trainer goes through these helpers instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::size_t Index(std::size_t n);
  // Uniform integer in [lo, hi].
  int Int(int lo, int hi);
  // Standard normal (Box-Muller, one draw per call).
  double Normal();

  template <typename T>
  void Shuffle(std::vector<T> &items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = Index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // Draws `count` items from `pool`. Without replacement when the pool is large
  // enough (a seeded partial shuffle), with replacement otherwise.
  template <typename T>
  std::vector<T> Sample(std::vector<T> pool, std::size_t count) {
    std::vector<T> out;
    if (pool.empty() || count == 0) return out;
    out.reserve(count);
    if (pool.size() >= count) {
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + Index(pool.size() - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) out.push_back(pool[Index(pool.size())]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent seed for a named substream ("corpus", "init", ...).
std::uint64_t SubstreamSeed(std::uint64_t global_seed, std::string_view name);

}  // namespace sita

#endif  // SITA_RANDOM_H_
