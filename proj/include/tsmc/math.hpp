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

#ifndef TSMC_MATH_HPP
#define TSMC_MATH_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace tsmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// log(sum(exp(values))) with max-shift; -inf for an empty or all -inf input.
inline double logsumexp(std::span<const double> values) {
  double max_value = kNegInf;
  for (const double v : values) {
    max_value = std::max(max_value, v);
  }
  if (!std::isfinite(max_value)) {
    return max_value;
  }
  double sum = 0.0;
  for (const double v : values) {
    sum += std::exp(v - max_value);
  }
  return max_value + std::log(sum);
}

}  // namespace tsmc

#endif  // TSMC_MATH_HPP
