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

#ifndef TSMC_PARTICLE_FILTER_HPP
#define TSMC_PARTICLE_FILTER_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "tsmc/model.hpp"
#include "tsmc/rng.hpp"

namespace tsmc {

/**
 * All internal randomness of one bootstrap particle filter run: particle
 * states, ancestor indices and the squared observation residuals
 * ||y_t - g(x_t^n)||^2.
 *
 * With isotropic Gaussian observation noise the residuals are a sufficient
 * statistic for every weight of the run, so the likelihood estimate and the
 * probability of the recorded resampling can be re-evaluated at any other
 * noise variance without simulating again.
 *
 * Buffers are time-major: state (t, n) starts at `(t * N + n) * d_x`,
 * residual (t, n) is at `t * N + n`, and ancestor (t, n) at `t * N + n` is the
 * index at time t that particle n at time t + 1 descends from.
 */
struct PfResult;
class Rng;

class TrajectoryBundle {
 public:
  TrajectoryBundle(std::size_t particles, std::size_t horizon, std::size_t state_dim, std::size_t obs_dim,
                   std::vector<double> states, std::vector<std::uint32_t> ancestors, std::vector<double> residuals,
                   double lambda_gen)
      : TrajectoryBundle(particles, horizon, state_dim, obs_dim, std::move(states), std::move(ancestors),
                         std::move(residuals), lambda_gen, {}) {}

  /// Builds a bundle from given states and ancestors, computing residuals
  /// with the model's observation map.
  static TrajectoryBundle from_states(const ModelSpec& model, std::span<const double> theta, const Dataset& data,
                                      std::size_t particles, std::vector<double> states,
                                      std::vector<std::uint32_t> ancestors, double lambda_gen);

  [[nodiscard]] std::size_t particles() const noexcept { return particles_; }
  [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }
  [[nodiscard]] std::size_t state_dim() const noexcept { return state_dim_; }
  [[nodiscard]] std::size_t obs_dim() const noexcept { return obs_dim_; }
  [[nodiscard]] double lambda_gen() const noexcept { return lambda_gen_; }

  [[nodiscard]] std::span<const double> state(std::size_t n, std::size_t t) const {
    return {states_.data() + (t * particles_ + n) * state_dim_, state_dim_};
  }
  [[nodiscard]] std::uint32_t ancestor(std::size_t n, std::size_t t) const { return ancestors_[t * particles_ + n]; }
  [[nodiscard]] double residual(std::size_t n, std::size_t t) const { return residuals_[t * particles_ + n]; }

  /// True if at some time every residual is infinite (all weights zero).
  [[nodiscard]] bool degenerate() const noexcept { return degenerate_; }

  /// Log of the unbiased likelihood estimate at `lambda`.
  [[nodiscard]] double loglik(double lambda) const;

  /// The lambda-dependent factors of the extended target: the likelihood
  /// sums over all times plus the log-probability of every recorded ancestor
  /// draw. -inf for a degenerate bundle.
  [[nodiscard]] double weight_terms(double lambda) const;

  /// Recomputes residuals from the stored states and compares with the cache.
  [[nodiscard]] bool residuals_consistent(const ModelSpec& model, std::span<const double> theta, const Dataset& data,
                                          double tolerance = 1e-12) const;

  /// Binary dump: u64 LE header (N_x, T, d_x), then states (N_x x T x d_x),
  /// ancestors (N_x x (T - 1), u64) and residuals (N_x x T), particle-major,
  /// all little-endian.
  void write_dump(const std::filesystem::path& path) const;
  static TrajectoryBundle read_dump(const std::filesystem::path& path, std::size_t obs_dim, double lambda_gen);

 private:
  // The filter hands over the per-time weight sums it already formed, which
  // are bit-identical to compute_log_totals at lambda_gen.
  friend PfResult run_bpf(const ModelSpec& model, std::span<const double> theta, double lambda, const Dataset& data,
                          std::size_t particles, Rng& rng);
  TrajectoryBundle(std::size_t particles, std::size_t horizon, std::size_t state_dim, std::size_t obs_dim,
                   std::vector<double> states, std::vector<std::uint32_t> ancestors, std::vector<double> residuals,
                   double lambda_gen, std::vector<double> gen_totals);

  /// Fills `log_totals[t] = log sum_n exp(-r_{t,n} / (2 lambda))`; returns false if any is -inf.
  bool log_totals(double lambda, std::vector<double>& log_totals) const;
  void compute_log_totals(double lambda, std::vector<double>& log_totals) const;

  std::size_t particles_;
  std::size_t horizon_;
  std::size_t state_dim_;
  std::size_t obs_dim_;
  std::vector<double> states_;
  std::vector<std::uint32_t> ancestors_;
  std::vector<double> residuals_;
  std::vector<double> min_residual_;
  double ancestor_residual_sum_ = 0.0;
  double lambda_gen_;
  bool degenerate_ = false;
  std::vector<double> gen_totals_;  ///< log_totals at lambda_gen, reused by every re-evaluation there
};

struct PfResult {
  std::shared_ptr<const TrajectoryBundle> bundle;
  double log_z = 0.0;  ///< -inf when degenerate
  bool degenerate = false;
};

/// Bootstrap particle filter with multinomial resampling at every step.
/// Throws std::invalid_argument unless particles >= 2 and lambda > 0.
PfResult run_bpf(const ModelSpec& model, std::span<const double> theta, double lambda, const Dataset& data,
                 std::size_t particles, Rng& rng);

/// Likelihood estimate of a stored run re-evaluated at `lambda`.
double loglik_given_bundle(const TrajectoryBundle& bundle, double lambda);

/// log p(theta) plus the lambda-dependent factors of the extended target
/// (likelihood sums for t = 1..T, ancestor probabilities for t = 1..T-1).
double extended_logweight(const TrajectoryBundle& bundle, std::span<const double> theta, double lambda,
                          const Prior& prior);

/// extended_logweight(lambda_new) - extended_logweight(lambda_old); the prior
/// cancels and is never evaluated. -inf if both weights are -inf.
double incremental_logweight(const TrajectoryBundle& bundle, double lambda_new, double lambda_old);

/// `count` i.i.d. categorical draws with probabilities proportional to
/// exp(log_weights). Throws DegenerateWeights if every entry is -inf.
std::vector<std::size_t> resample_multinomial(std::span<const double> log_weights, std::size_t count, Rng& rng);

/// Systematic resampling (single uniform offset).
std::vector<std::size_t> resample_systematic(std::span<const double> log_weights, std::size_t count, Rng& rng);

}  // namespace tsmc

#endif  // TSMC_PARTICLE_FILTER_HPP
