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

#ifndef TSMC_EXACT_INFERENCE_HPP
#define TSMC_EXACT_INFERENCE_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "tsmc/model.hpp"

namespace tsmc {

/// Exact log p(y_{1:T} | theta, lambda) for a linear-Gaussian model via the
/// prediction-error decomposition. lambda = 0 is allowed as long as the
/// innovation covariance stays positive definite; otherwise throws
/// NumericalError.
double kalman_loglik(const ModelSpec& model, std::span<const double> theta, double lambda, const Dataset& data);

/// Same, for an explicitly given set of system matrices.
double kalman_loglik(const LinearGaussianForm& form, double lambda, const Dataset& data);

/// One sorted coordinate axis of a grid.
struct GridAxis {
  std::vector<double> points;

  /// `count` equally spaced points on [lower, upper] (inclusive).
  static GridAxis linspace(double lower, double upper, std::size_t count);
};

/// Normalized posterior masses over a tensor grid of parameter values.
/// Masses are stored with the last axis varying fastest.
struct GridPosterior {
  std::vector<GridAxis> axes;
  std::vector<double> log_masses;  ///< unnormalized log posterior per node
  std::vector<double> masses;      ///< normalized, sums to 1

  [[nodiscard]] std::size_t node_count() const noexcept { return masses.size(); }
  /// Parameter vector at flat node index.
  [[nodiscard]] std::vector<double> node(std::size_t flat) const;
  /// Marginal masses along one axis.
  [[nodiscard]] std::vector<double> marginal(std::size_t axis) const;
  [[nodiscard]] std::vector<double> mean() const;
  [[nodiscard]] std::vector<double> stddev() const;
};

/// Evaluates kalman_loglik + log prior on every node of the grid (1 or 2
/// axes) and normalizes in the log domain. Throws NumericalError when every
/// node has zero posterior mass.
GridPosterior grid_posterior(const ModelSpec& model, double lambda, const Dataset& data, std::vector<GridAxis> axes,
                             int threads = 1);

/// Default 100-point axes spanning the model's prior box.
std::vector<GridAxis> default_grid_axes(const ModelSpec& model, std::size_t points_per_axis = 100);

/// CSV `theta1,theta2,mass` (or `theta1,mass` for a single axis).
void write_grid_csv(const GridPosterior& grid, const std::filesystem::path& path);

}  // namespace tsmc

#endif  // TSMC_EXACT_INFERENCE_HPP
