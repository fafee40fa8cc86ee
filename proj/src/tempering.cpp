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

#include "tsmc/tempering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <boost/math/tools/toms748_solve.hpp>

#include "tsmc/errors.hpp"
#include "tsmc/io.hpp"
#include "tsmc/math.hpp"
#include "tsmc/parallel.hpp"

namespace tsmc {

void TemperingConfig::validate(bool allow_zero_target) const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
  if (!(lambda_0 > 0.0) || !std::isfinite(lambda_0)) {
    throw std::invalid_argument("lambda_0 must be positive and finite");
  }
  if (!(lambda_target >= 0.0) || (!allow_zero_target && lambda_target == 0.0)) {
    throw std::invalid_argument(allow_zero_target ? "lambda_target must be >= 0"
                                                  : "lambda_target must be > 0 for particle-filter runs");
  }
  if (!(lambda_target < lambda_0)) {
    throw std::invalid_argument("lambda_target must be smaller than lambda_0");
  }
  if (!(accept_floor >= 0.0 && accept_floor < 1.0)) {
    throw std::invalid_argument("accept_floor must lie in [0, 1)");
  }
  if (p_max == 0) {
    throw std::invalid_argument("p_max must be >= 1");
  }
  if (!(ess_tol > 0.0 && ess_tol < 1.0)) {
    throw std::invalid_argument("ess_tol must lie in (0, 1)");
  }
  if (bisect_max_iter < 1) {
    throw std::invalid_argument("bisect_max_iter must be >= 1");
  }
  if (!(fallback_rho > 0.0 && fallback_rho < 1.0)) {
    throw std::invalid_argument("fallback_rho must lie in (0, 1)");
  }
}

TemperingState TemperingState::initial(double lambda_0, std::size_t population) {
  TemperingState state;
  state.lambda = lambda_0;
  state.ess_achieved = static_cast<double>(population);
  state.mh_accept_rate = 1.0;
  state.lambda_history = {lambda_0};
  return state;
}

void TemperingState::advance(double new_lambda, double ess, double accept_rate) {
  if (!(new_lambda < lambda)) {
    throw std::logic_error("tempering sequence must be strictly decreasing");
  }
  ++p;
  lambda = new_lambda;
  ess_achieved = ess;
  mh_accept_rate = accept_rate;
  lambda_history.push_back(new_lambda);
}

double ess(std::span<const double> log_weights) {
  double max_value = kNegInf;
  for (const double w : log_weights) {
    max_value = std::max(max_value, w);
  }
  if (!std::isfinite(max_value)) {
    throw DegenerateWeights("ess: no finite weight");
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const double w : log_weights) {
    const double v = std::exp(w - max_value);
    sum += v;
    sum_sq += v * v;
  }
  const double value = sum * sum / sum_sq;
  return std::clamp(value, 1.0, static_cast<double>(log_weights.size()));
}

std::string to_string(LambdaSolution::Kind kind) {
  switch (kind) {
    case LambdaSolution::Kind::kCrossing:
      return "crossing";
    case LambdaSolution::Kind::kTerminal:
      return "terminal";
    case LambdaSolution::Kind::kMaxIter:
      return "max-iter";
    case LambdaSolution::Kind::kFallback:
      return "fallback";
  }
  return "unknown";
}

namespace {

/// Lower bracket used when the target is 0: the search runs on log lambda.
constexpr double kZeroTargetBracket = 1e-12;

}  // namespace

LambdaSolution solve_lambda(const IncrementFn& increments, std::size_t population, double lambda_prev,
                            const TemperingConfig& cfg) {
  if (!(lambda_prev > cfg.lambda_target)) {
    throw std::invalid_argument("solve_lambda: lambda_prev must exceed lambda_target");
  }
  const double target = cfg.alpha * static_cast<double>(population);
  std::vector<double> buffer(population);
  auto ess_at = [&](double lambda) {
    increments(lambda, buffer);
    try {
      return ess(buffer);
    } catch (const DegenerateWeights&) {
      return 0.0;
    }
  };
  auto within_tol = [&](double value) { return std::abs(value - target) / target <= cfg.ess_tol; };

  const double ess_target = ess_at(cfg.lambda_target);
  if (ess_target >= target) {
    return {cfg.lambda_target, ess_target, LambdaSolution::Kind::kTerminal, 0};
  }

  double lo = cfg.lambda_target;
  double ess_lo = ess_target;
  if (lo == 0.0) {
    lo = lambda_prev * kZeroTargetBracket;
    ess_lo = ess_at(lo);
    if (ess_lo >= target) {
      return {lo, ess_lo, LambdaSolution::Kind::kTerminal, 0};
    }
  }

  const double top = lambda_prev * (1.0 - 1e-9);
  const double ess_top = ess_at(top);
  if (ess_top < target) {
    const double lambda = std::max(cfg.lambda_target, lambda_prev * cfg.fallback_rho);
    return {lambda, ess_at(lambda), LambdaSolution::Kind::kFallback, 0};
  }

  double hi = top;
  double ess_hi = ess_top;
  if (within_tol(ess_hi)) {
    return {hi, ess_hi, LambdaSolution::Kind::kCrossing, 0};
  }
  // Bracketing root search over log(1 / lambda - 1 / lambda_prev), in which
  // the log-weights are close to linear. A point inside the tolerance band
  // is reported as an exact root, which stops the search there.
  const double beta_prev = 1.0 / lambda_prev;
  std::optional<LambdaSolution> hit;
  auto gap = [&](double log_step) {
    const double lambda = 1.0 / (beta_prev + std::exp(log_step));
    const double value = ess_at(lambda);
    if (within_tol(value)) {
      hit = LambdaSolution{lambda, value, LambdaSolution::Kind::kCrossing, 0};
      return 0.0;
    }
    if (value > target && lambda < hi) {
      hi = lambda;
      ess_hi = value;
    }
    return target - value;
  };
  auto iterations = static_cast<std::uintmax_t>(cfg.bisect_max_iter);
  boost::math::tools::toms748_solve(gap, std::log(1.0 / top - beta_prev), std::log(1.0 / lo - beta_prev),
                                    target - ess_top, target - ess_lo,
                                    boost::math::tools::eps_tolerance<double>(52), iterations);
  if (hit) {
    hit->iterations = static_cast<int>(iterations);
    return *hit;
  }
  return {hi, ess_hi, LambdaSolution::Kind::kMaxIter, static_cast<int>(iterations)};
}

std::vector<double> incremental_logweights(std::span<const TrajectoryBundle* const> bundles, double lambda_new,
                                           double lambda_old, int threads) {
  std::vector<double> increments(bundles.size());
  parallel_for(bundles.size(), threads,
               [&](std::size_t j) { increments[j] = incremental_logweight(*bundles[j], lambda_new, lambda_old); });
  return increments;
}

LambdaSolution solve_lambda(std::span<const TrajectoryBundle* const> bundles, double lambda_prev,
                            const TemperingConfig& cfg, int threads) {
  std::vector<double> current(bundles.size());
  parallel_for(bundles.size(), threads, [&](std::size_t j) { current[j] = bundles[j]->weight_terms(lambda_prev); });
  const IncrementFn increments = [&](double lambda, std::vector<double>& out) {
    parallel_for(bundles.size(), threads, [&](std::size_t j) {
      const double updated = bundles[j]->weight_terms(lambda);
      out[j] = updated == kNegInf ? kNegInf : updated - current[j];
    });
  };
  return solve_lambda(increments, bundles.size(), lambda_prev, cfg);
}

std::string TerminationDecision::describe() const {
  if (reasons == kContinue) {
    return "continue";
  }
  std::string text;
  auto append = [&](const char* name) {
    if (!text.empty()) {
      text += '+';
    }
    text += name;
  };
  if ((reasons & kTargetReached) != 0U) {
    append("target-reached");
  }
  if ((reasons & kAcceptanceFloor) != 0U) {
    append("acceptance-floor");
  }
  if ((reasons & kStepCap) != 0U) {
    append("step-cap");
  }
  return text;
}

TerminationDecision should_terminate(const TemperingState& state, const TemperingConfig& cfg) {
  TerminationDecision decision;
  if (state.lambda <= cfg.lambda_target) {
    decision.reasons |= kTargetReached;
  }
  if (state.mh_accept_rate < cfg.accept_floor) {
    decision.reasons |= kAcceptanceFloor;
  }
  if (state.p >= cfg.p_max) {
    decision.reasons |= kStepCap;
  }
  decision.terminate = decision.reasons != kContinue;
  return decision;
}

void write_schedule_csv(std::span<const ScheduleRow> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17) << "p,lambda,ess,accept_rate\n";
  for (const auto& row : rows) {
    out << row.p << ',' << row.lambda << ',' << row.ess << ',' << row.accept_rate << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace tsmc
