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

#ifndef TSMC_SMC_SAMPLER_HPP
#define TSMC_SMC_SAMPLER_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tsmc/errors.hpp"
#include "tsmc/model.hpp"
#include "tsmc/particle_filter.hpp"
#include "tsmc/rng.hpp"
#include "tsmc/tempering.hpp"

namespace tsmc {

/// Random-walk proposal settings. With `adapt` the covariance is
/// (2.38^2 / d) times the population covariance, refreshed every tempering
/// step; `scale` is then only the fallback (and the warm-up proposal).
struct ProposalSpec {
  std::vector<double> scale;
  bool adapt = true;

  void validate(std::size_t dim) const;
};

/// Symmetric Gaussian random walk theta' = theta + L z with a fixed factor L.
class RandomWalk {
 public:
  static RandomWalk diagonal(std::span<const double> scale);
  /// Throws NumericalError unless `covariance` is positive definite.
  static RandomWalk from_covariance(const Eigen::MatrixXd& covariance);
  /// Any lower-triangular factor, including zero.
  static RandomWalk from_factor(Eigen::MatrixXd factor);
  /// The proposal for one tempering step of a population.
  static RandomWalk for_population(const ProposalSpec& spec, std::span<const ParamVector> thetas);

  [[nodiscard]] ParamVector propose(std::span<const double> theta, Rng& rng) const;
  [[nodiscard]] const Eigen::MatrixXd& factor() const noexcept { return factor_; }

 private:
  explicit RandomWalk(Eigen::MatrixXd factor) : factor_{std::move(factor)} {}
  Eigen::MatrixXd factor_;
};

enum class OuterResampling { kMultinomial, kSystematic };

struct StepRecord;

struct SamplerConfig {
  std::size_t state_particles = 100;  ///< N_x
  std::size_t population = 100;       ///< N_theta
  std::size_t sweeps = 10;            ///< K: full MH sweeps per tempering step
  std::size_t warm_moves = 20;        ///< MH moves per particle at lambda_0
  TemperingConfig tempering;
  ProposalSpec proposal;
  OuterResampling resampling = OuterResampling::kMultinomial;
  std::uint64_t seed = 1;
  int threads = 1;
  std::function<void(const StepRecord&)> on_step;  ///< optional, called after every step

  /// Throws std::invalid_argument. `exact` relaxes the particle-filter-only rules.
  void validate(const ModelSpec& model, bool exact) const;
};

/// One outer sample with its particle-filter run and cached weights at the
/// population's current lambda.
struct ThetaParticle {
  ParamVector theta;
  std::shared_ptr<const TrajectoryBundle> bundle;
  double log_z = 0.0;
  double log_ext_weight = 0.0;
  std::uint64_t id = 0;  ///< keys the particle's move stream within a step
};

struct Population {
  std::vector<ThetaParticle> particles;
  double lambda = 0.0;
  std::size_t step = 0;
};

/// True if every cached log_z equals loglik_given_bundle at the population lambda, bit for bit.
bool cache_coherent(const Population& population);

/// Outcome of the MH moves of one tempering step. `events[j * K + k]` is 1
/// if the k-th move of particle slot j was accepted.
struct MoveStats {
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::vector<std::uint8_t> events;

  [[nodiscard]] double rate() const {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }
};

/// Prior draws moved by short particle MH chains at lambda_0, each keeping
/// the bundle of its final state. Throws NumericalError if every draw has a
/// zero likelihood estimate.
Population init_population(const ModelSpec& model, const Dataset& data, const SamplerConfig& cfg,
                           MoveStats* warm_stats = nullptr);

/// One particle Metropolis-Hastings move at `lambda`. Returns true on accept.
bool pmh_kernel(ThetaParticle& particle, double lambda, const ModelSpec& model, const Dataset& data,
                const RandomWalk& proposal, std::size_t state_particles, Rng& rng);

/// Parameter with its exact log-likelihood at the current lambda.
struct ExactState {
  ParamVector theta;
  double log_lik = 0.0;
};

/// One exact-likelihood Metropolis-Hastings move. Returns true on accept.
bool mh_kernel_exact(ExactState& state, double lambda, const ModelSpec& model, const Dataset& data,
                     const RandomWalk& proposal, Rng& rng);

/// Resamples whole (theta, bundle) pairs by the incremental weights, assigns
/// fresh ids and refreshes every cache at `lambda_new`. Throws
/// DegenerateWeights if every increment is -inf.
Population resample_population(const Population& population, std::span<const double> increments,
                               double lambda_new, const Prior& prior, Rng& rng,
                               OuterResampling scheme = OuterResampling::kMultinomial);

/// K sweeps of pmh_kernel over the population; the stream of each particle
/// is keyed by (seed, step, id), so results do not depend on slot order or
/// thread count.
MoveStats rejuvenate(Population& population, const ModelSpec& model, const Dataset& data,
                     const RandomWalk& proposal, const SamplerConfig& cfg);

struct StepRecord {
  std::size_t p = 0;
  double lambda = 0.0;
  double ess = 0.0;
  double accept_rate = 0.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  LambdaSolution::Kind solve_kind = LambdaSolution::Kind::kCrossing;
  std::vector<ParamVector> thetas;  ///< population after the step's moves
  std::vector<std::uint8_t> move_events;
};

struct RunOutput {
  std::vector<ParamVector> samples;
  std::vector<StepRecord> steps;  ///< steps[0] is the initial population at lambda_0
  TemperingState state;
  TerminationDecision termination;
  double wall_seconds = 0.0;

  [[nodiscard]] std::vector<ScheduleRow> schedule() const;
};

/// A run stopped by a numerical failure; carries the steps completed so far.
class RunFailure : public NumericalError {
 public:
  RunFailure(const std::string& what, RunOutput partial) : NumericalError(what), partial_{std::move(partial)} {}
  [[nodiscard]] const RunOutput& partial() const noexcept { return partial_; }

 private:
  RunOutput partial_;
};

/// Tempered SMC on the extended space with nested bootstrap particle filters.
RunOutput run_tempered_smc(const ModelSpec& model, const Dataset& data, const SamplerConfig& cfg);

/// The same loop with exact Kalman likelihoods; lambda_target = 0 allowed.
RunOutput run_exact_tempered_smc(const ModelSpec& model, const Dataset& data, const SamplerConfig& cfg);

struct MhChain {
  std::vector<ParamVector> samples;
  std::size_t accepted = 0;

  [[nodiscard]] double acceptance_rate() const {
    return samples.empty() ? 0.0 : static_cast<double>(accepted) / static_cast<double>(samples.size());
  }
};

/// Plain particle MH chain at fixed lambda; `length` moves, one sample each.
MhChain run_pmh(const ModelSpec& model, const Dataset& data, double lambda, std::size_t length,
                const RandomWalk& proposal, std::span<const double> theta_init, std::size_t state_particles,
                std::uint64_t seed);

/// Exact-likelihood MH chain at fixed lambda.
MhChain run_exact_mh(const ModelSpec& model, const Dataset& data, double lambda, std::size_t length,
                     const RandomWalk& proposal, std::span<const double> theta_init, std::uint64_t seed);

/// CSV `j,theta_1..theta_d`, j starting at 1.
void write_samples_csv(std::span<const ParamVector> samples, const std::filesystem::path& path);

}  // namespace tsmc

#endif  // TSMC_SMC_SAMPLER_HPP
