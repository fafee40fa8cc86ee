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

#ifndef TSMC_TESTS_BRUTE_FORCE_HPP
#define TSMC_TESTS_BRUTE_FORCE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include "tsmc/model.hpp"
#include "tsmc/rng.hpp"

namespace tsmc::testing {

/// log of p(theta) times the weight-dependent factors of the extended
/// target, evaluated as plain products of densities:
///   prod_t sum_n N(y_t; g(x_t^n), lambda I)
///   * prod_{t < T} prod_n w_t^{a(n,t)} / sum_m w_t^m.
/// States are time-major (t, n, k); ancestors are (t, n) for t < T - 1.
inline double brute_force_extended_logweight(const ModelSpec& model, const std::vector<double>& theta,
                                             const Dataset& data, std::size_t particles,
                                             const std::vector<double>& states,
                                             const std::vector<std::uint32_t>& ancestors, double lambda) {
  const std::size_t horizon = data.horizon();
  const std::size_t dx = model.state_dim;
  const std::size_t dy = model.obs_dim;
  std::vector<std::vector<double>> w(horizon, std::vector<double>(particles));
  std::vector<double> g(dy);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t n = 0; n < particles; ++n) {
      model.observe(theta, std::span<const double>(states.data() + (t * particles + n) * dx, dx), g);
      double density = 1.0;
      for (std::size_t k = 0; k < dy; ++k) {
        const double e = data.observation(t)[k] - g[k];
        density *= std::exp(-e * e / (2.0 * lambda)) / std::sqrt(2.0 * std::numbers::pi * lambda);
      }
      w[t][n] = density;
    }
  }
  double value = std::exp(model.prior.log_density(theta));
  for (std::size_t t = 0; t < horizon; ++t) {
    double total = 0.0;
    for (const double v : w[t]) {
      total += v;
    }
    value *= total;
    if (t + 1 < horizon) {
      for (std::size_t n = 0; n < particles; ++n) {
        value *= w[t][ancestors[t * particles + n]] / total;
      }
    }
  }
  return std::log(value);
}

/// Visits every ancestor assignment of an N x (T - 1) table.
inline void for_each_ancestor_table(std::size_t particles, std::size_t horizon,
                                    const std::function<void(const std::vector<std::uint32_t>&)>& visit) {
  std::vector<std::uint32_t> table(particles * (horizon - 1), 0);
  while (true) {
    visit(table);
    std::size_t i = 0;
    while (i < table.size() && ++table[i] == particles) {
      table[i] = 0;
      ++i;
    }
    if (i == table.size()) {
      return;
    }
  }
}

}  // namespace tsmc::testing

#endif  // TSMC_TESTS_BRUTE_FORCE_HPP
