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

#ifndef TSMC_MODEL_HPP
#define TSMC_MODEL_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsmc/math.hpp"
#include "tsmc/rng.hpp"

namespace tsmc {

using ParamVector = std::vector<double>;

/// Parameter prior: a log-density and a sampler that agree on the support.
class Prior {
 public:
  using LogDensityFn = std::function<double(std::span<const double>)>;
  using SamplerFn = std::function<ParamVector(Rng&)>;

  Prior(std::size_t dim, LogDensityFn log_density, SamplerFn sampler);

  /// Independent uniform components on [lower_i, upper_i].
  static Prior uniform_box(std::vector<double> lower, std::vector<double> upper);

  /// Independent Gaussian components (unbounded support).
  static Prior gaussian(std::vector<double> mean, std::vector<double> stddev);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] double log_density(std::span<const double> theta) const { return log_density_(theta); }
  [[nodiscard]] ParamVector sample(Rng& rng) const { return sampler_(rng); }

  /// Support box, when the prior has one.
  [[nodiscard]] const std::optional<std::pair<std::vector<double>, std::vector<double>>>& box() const noexcept {
    return box_;
  }

 private:
  std::size_t dim_;
  LogDensityFn log_density_;
  SamplerFn sampler_;
  std::optional<std::pair<std::vector<double>, std::vector<double>>> box_;
};

/// Matrices of a linear-Gaussian model
///   x_{t+1} = A x_t + B u_t + v_t,  v_t ~ N(0, Q)
///   y_t     = C x_t,                x_1 ~ N(mu1, P1).
struct LinearGaussianForm {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd Q;
  Eigen::VectorXd mu1;
  Eigen::MatrixXd P1;
};

/// A state-space model with a stochastic transition and a deterministic
/// observation map. All callables must be thread safe; randomness enters
/// only through the supplied generator.
struct ModelSpec {
  using TransitionFn = std::function<void(std::span<const double> theta, std::span<const double> x,
                                          std::span<const double> u, Rng& rng, std::span<double> x_next)>;
  using ObserveFn = std::function<void(std::span<const double> theta, std::span<const double> x,
                                       std::span<double> y)>;
  using InitFn = std::function<void(std::span<const double> theta, Rng& rng, std::span<double> x)>;
  using LinearFormFn = std::function<LinearGaussianForm(std::span<const double> theta)>;

  std::string name;
  std::size_t state_dim = 0;
  std::size_t obs_dim = 0;
  std::size_t input_dim = 0;
  std::size_t param_dim = 0;
  TransitionFn transition;
  ObserveFn observe;
  InitFn init_state;
  Prior prior;
  /// Present only for linear-Gaussian models; enables exact inference.
  LinearFormFn linear_form;

  /// Throws std::invalid_argument when dimensions or callables are inconsistent.
  void validate() const;

  [[nodiscard]] bool is_linear_gaussian() const noexcept { return static_cast<bool>(linear_form); }
};

/// Observed data (and, for synthetic data, the ground truth behind it).
/// Matrices are stored row-major, one row per time step.
class Dataset {
 public:
  Dataset(std::size_t input_dim, std::size_t obs_dim, std::vector<double> inputs, std::vector<double> observations);

  [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }
  [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
  [[nodiscard]] std::size_t obs_dim() const noexcept { return obs_dim_; }

  [[nodiscard]] std::span<const double> input(std::size_t t) const {
    return {inputs_.data() + t * input_dim_, input_dim_};
  }
  [[nodiscard]] std::span<const double> observation(std::size_t t) const {
    return {observations_.data() + t * obs_dim_, obs_dim_};
  }

  [[nodiscard]] const std::vector<double>& inputs() const noexcept { return inputs_; }
  [[nodiscard]] const std::vector<double>& observations() const noexcept { return observations_; }

  std::optional<std::vector<double>> true_states;
  std::optional<ParamVector> true_theta;

 private:
  std::size_t input_dim_;
  std::size_t obs_dim_;
  std::size_t horizon_;
  std::vector<double> inputs_;
  std::vector<double> observations_;
};

/// Produces a T x d_u row-major input matrix.
using InputPolicy = std::function<std::vector<double>(std::size_t horizon, std::size_t input_dim, Rng& rng)>;

/// i.i.d. standard Gaussian inputs.
std::vector<double> white_noise_inputs(std::size_t horizon, std::size_t input_dim, Rng& rng);

/// Iterates the transition from a draw of the initial state and applies the
/// observation map without noise. Throws SimulationDivergence on a
/// non-finite state.
Dataset simulate(const ModelSpec& model, std::span<const double> theta, std::size_t horizon, std::uint64_t seed,
                 const InputPolicy& input_policy = white_noise_inputs);

/// Copy of `data` with i.i.d. N(0, variance) noise added to every
/// observation; variance 0 returns the data unchanged.
Dataset add_observation_noise(const Dataset& data, double variance, std::uint64_t seed);

/// log N(y; predicted, lambda * I). Throws std::domain_error unless lambda > 0.
double obs_logdensity(std::span<const double> y, std::span<const double> predicted, double lambda);

/// Gaussian log-density in terms of the squared residual norm.
inline double obs_logdensity_from_residual(double squared_residual, std::size_t obs_dim, double lambda) {
  return -0.5 * static_cast<double>(obs_dim) * (kLog2Pi + std::log(lambda)) - squared_residual / (2.0 * lambda);
}

/// Two-state linear model with unknown coupling theta_1 and input gain theta_2,
/// unit process noise and a noise-free first-coordinate observation.
/// Prior: uniform on [-2.5, 2.5]^2.
ModelSpec make_linear_model();

/// Scalar model x' = atan(x) + theta_1 u + v with observation |x| + theta_1 theta_2.
/// Prior: uniform, theta_1 in [-2.5, 2.5], theta_2 in [0, 2.5].
ModelSpec make_atan_model();

/// Built-in and user-registered models by id ("linear", "atan", ...).
std::optional<ModelSpec> find_model(const std::string& id);
void register_model(const std::string& id, std::function<ModelSpec()> factory);

/// CSV with header t,u_1..u_du,y_1..y_dy and 17 significant digits.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace tsmc

#endif  // TSMC_MODEL_HPP
