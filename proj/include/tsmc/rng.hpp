// Copyright 2026 The tsmc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TSMC_RNG_HPP
#define TSMC_RNG_HPP

#include <cstdint>
#include <initializer_list>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace tsmc {

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream purposes. Every random draw in the library is attributable to one
/// of these plus a tuple of integer ids, which keeps results independent of
/// how work is scheduled across threads.
enum class Stream : std::uint64_t {
  kSimulateInputs = 1,
  kSimulateStates = 2,
  kInitPrior = 3,
  kInitWarm = 4,
  kResample = 5,
  kMoves = 6,
  kPmhChain = 7,
  kCheck = 8,
  kSimulateNoise = 9,
};

/// Random number generator handle. Not thread safe; give each worker its own.
class Rng {
 public:
  using result_type = boost::random::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives a generator keyed by a master seed, a purpose and a list of ids.
  static Rng stream(std::uint64_t master, Stream purpose, std::initializer_list<std::uint64_t> ids = {}) {
    std::uint64_t h = mix64(master ^ mix64(static_cast<std::uint64_t>(purpose)));
    for (const auto id : ids) {
      h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
    }
    return Rng{h};
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  result_type operator()() { return engine_(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

 private:
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tsmc

#endif  // TSMC_RNG_HPP
