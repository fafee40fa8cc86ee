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

#ifndef TSMC_TEMPERING_HPP
#define TSMC_TEMPERING_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsmc/particle_filter.hpp"

namespace tsmc {

struct TemperingConfig {
  double alpha = 0.5;          ///< target ESS fraction, in (0, 1)
  double lambda_0 = 10.0;      ///< initial artificial noise variance
  double lambda_target = 0.01; ///< final variance; 0 only with exact likelihoods
  double accept_floor = 0.05;  ///< stop once the MH acceptance rate drops below this
  std::size_t p_max = 500;
  double ess_tol = 1e-2;       ///< relative tolerance on ESS = alpha * N
  int bisect_max_iter = 60;
  double fallback_rho = 0.95;  ///< geometric decrement when no crossing is bracketed

  /// Throws std::invalid_argument on violated invariants. A zero target is
  /// accepted only when `allow_zero_target` is set.
  void validate(bool allow_zero_target) const;
};

/// Progress of one tempered run.
struct TemperingState {
  std::size_t p = 0;
  double lambda = 0.0;
  double ess_achieved = 0.0;
  double mh_accept_rate = 1.0;
  std::vector<double> lambda_history;

  static TemperingState initial(double lambda_0, std::size_t population);

  /// Records step p + 1. Throws std::logic_error unless lambda decreases.
  void advance(double new_lambda, double ess, double accept_rate);
};

/// Effective sample size (sum W)^2 / sum W^2 of log-weights, in [1, N].
/// Invariant to adding a constant to every entry. Throws DegenerateWeights
/// if no entry is finite.
double ess(std::span<const double> log_weights);

struct LambdaSolution {
  enum class Kind {
    kCrossing,   ///< ESS within tolerance of alpha * N
    kTerminal,   ///< ESS at lambda_target already at or above alpha * N
    kMaxIter,    ///< search budget exhausted; upper bracket returned
    kFallback,   ///< no crossing near lambda_prev; geometric decrement
  };
  double lambda = 0.0;
  double ess = 0.0;
  Kind kind = Kind::kCrossing;
  int iterations = 0;
};

std::string to_string(LambdaSolution::Kind kind);

/// Fills the incremental log-weights of every population member for moving
/// from the previous variance to `lambda`.
using IncrementFn = std::function<void(double lambda, std::vector<double>& increments)>;

/// Finds lambda in [lambda_target, lambda_prev) with ESS = alpha * N by a
/// bracketing root search on log(1 / lambda - 1 / lambda_prev). Always
/// returns lambda < lambda_prev.
LambdaSolution solve_lambda(const IncrementFn& increments, std::size_t population, double lambda_prev,
                            const TemperingConfig& cfg);

/// Incremental log-weights of stored bundles for lambda_old -> lambda_new.
std::vector<double> incremental_logweights(std::span<const TrajectoryBundle* const> bundles, double lambda_new,
                                           double lambda_old, int threads = 1);

/// solve_lambda over a population of bundles generated (or last reweighted)
/// at lambda_prev.
LambdaSolution solve_lambda(std::span<const TrajectoryBundle* const> bundles, double lambda_prev,
                            const TemperingConfig& cfg, int threads = 1);

enum TerminationReason : unsigned {
  kContinue = 0,
  kTargetReached = 1U << 0U,
  kAcceptanceFloor = 1U << 1U,
  kStepCap = 1U << 2U,
};

struct TerminationDecision {
  bool terminate = false;
  unsigned reasons = kContinue;

  /// "target-reached", "acceptance-floor", "step-cap" joined by '+', or "continue".
  [[nodiscard]] std::string describe() const;
};

TerminationDecision should_terminate(const TemperingState& state, const TemperingConfig& cfg);

struct ScheduleRow {
  std::size_t p = 0;
  double lambda = 0.0;
  double ess = 0.0;
  double accept_rate = 0.0;
};

/// CSV `p,lambda,ess,accept_rate`.
void write_schedule_csv(std::span<const ScheduleRow> rows, const std::filesystem::path& path);

}  // namespace tsmc

#endif  // TSMC_TEMPERING_HPP
