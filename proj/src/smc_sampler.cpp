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

#include "tsmc/smc_sampler.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "tsmc/exact_inference.hpp"
#include "tsmc/io.hpp"
#include "tsmc/math.hpp"
#include "tsmc/parallel.hpp"

namespace tsmc {

void ProposalSpec::validate(std::size_t dim) const {
  if (scale.size() != dim) {
    throw std::invalid_argument("proposal needs one scale per parameter");
  }
  for (const double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("proposal scales must be positive and finite");
    }
  }
}

RandomWalk RandomWalk::diagonal(std::span<const double> scale) {
  Eigen::MatrixXd factor = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(scale.size()),
                                                 static_cast<Eigen::Index>(scale.size()));
  for (std::size_t i = 0; i < scale.size(); ++i) {
    factor(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = scale[i];
  }
  return RandomWalk{std::move(factor)};
}

RandomWalk RandomWalk::from_covariance(const Eigen::MatrixXd& covariance) {
  const Eigen::LLT<Eigen::MatrixXd> chol(covariance);
  if (chol.info() != Eigen::Success) {
    throw NumericalError("proposal covariance is not positive definite");
  }
  return RandomWalk{chol.matrixL()};
}

RandomWalk RandomWalk::from_factor(Eigen::MatrixXd factor) { return RandomWalk{std::move(factor)}; }

RandomWalk RandomWalk::for_population(const ProposalSpec& spec, std::span<const ParamVector> thetas) {
  const std::size_t dim = spec.scale.size();
  if (!spec.adapt || thetas.size() <= dim) {
    return diagonal(spec.scale);
  }
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& theta : thetas) {
    mean += Eigen::Map<const Eigen::VectorXd>(theta.data(), d);
  }
  mean /= static_cast<double>(thetas.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& theta : thetas) {
    const Eigen::VectorXd centered = Eigen::Map<const Eigen::VectorXd>(theta.data(), d) - mean;
    cov += centered * centered.transpose();
  }
  cov /= static_cast<double>(thetas.size() - 1);
  cov *= 2.38 * 2.38 / static_cast<double>(dim);
  const Eigen::LLT<Eigen::MatrixXd> chol(cov);
  if (chol.info() != Eigen::Success || !(chol.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-12)) {
    return diagonal(spec.scale);
  }
  return RandomWalk{chol.matrixL()};
}

ParamVector RandomWalk::propose(std::span<const double> theta, Rng& rng) const {
  const auto d = factor_.rows();
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    z(i) = rng.normal();
  }
  const Eigen::VectorXd step = factor_ * z;
  ParamVector proposal(theta.begin(), theta.end());
  for (Eigen::Index i = 0; i < d; ++i) {
    proposal[static_cast<std::size_t>(i)] += step(i);
  }
  return proposal;
}

void SamplerConfig::validate(const ModelSpec& model, bool exact) const {
  model.validate();
  if (!exact && state_particles < 2) {
    throw std::invalid_argument("state_particles (N_x) must be >= 2");
  }
  if (population < 2) {
    throw std::invalid_argument("population (N_theta) must be >= 2");
  }
  if (sweeps == 0) {
    throw std::invalid_argument("sweeps (K) must be >= 1");
  }
  if (exact && !model.is_linear_gaussian()) {
    throw std::invalid_argument("exact mode needs a linear-Gaussian model");
  }
  tempering.validate(exact);
  proposal.validate(model.param_dim);
}

bool cache_coherent(const Population& population) {
  for (const auto& particle : population.particles) {
    if (!particle.bundle) {
      return false;
    }
    const double expected = loglik_given_bundle(*particle.bundle, population.lambda);
    if (!(expected == particle.log_z || (std::isnan(expected) && std::isnan(particle.log_z)))) {
      return false;
    }
  }
  return true;
}

namespace {

ThetaParticle make_particle(ParamVector theta, PfResult result, double lambda, const Prior& prior, std::uint64_t id) {
  ThetaParticle particle;
  particle.theta = std::move(theta);
  particle.bundle = std::move(result.bundle);
  particle.log_z = result.log_z;
  particle.log_ext_weight = extended_logweight(*particle.bundle, particle.theta, lambda, prior);
  particle.id = id;
  return particle;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<ParamVector> thetas_of(const Population& population) {
  std::vector<ParamVector> thetas;
  thetas.reserve(population.particles.size());
  for (const auto& particle : population.particles) {
    thetas.push_back(particle.theta);
  }
  return thetas;
}

std::vector<ParamVector> thetas_of(const std::vector<ExactState>& states) {
  std::vector<ParamVector> thetas;
  thetas.reserve(states.size());
  for (const auto& state : states) {
    thetas.push_back(state.theta);
  }
  return thetas;
}

std::vector<std::size_t> draw_indices(std::span<const double> log_weights, std::size_t count, Rng& rng,
                                      OuterResampling scheme) {
  return scheme == OuterResampling::kSystematic ? resample_systematic(log_weights, count, rng)
                                                : resample_multinomial(log_weights, count, rng);
}

}  // namespace

bool pmh_kernel(ThetaParticle& particle, double lambda, const ModelSpec& model, const Dataset& data,
                const RandomWalk& proposal, std::size_t state_particles, Rng& rng) {
  ParamVector candidate = proposal.propose(particle.theta, rng);
  const double log_prior_new = model.prior.log_density(candidate);
  const double log_u = std::log(rng.uniform());
  if (log_prior_new == kNegInf) {
    return false;
  }
  PfResult result = run_bpf(model, candidate, lambda, data, state_particles, rng);
  if (result.log_z == kNegInf) {
    return false;
  }
  const double log_prior_old = model.prior.log_density(particle.theta);
  const double current = particle.log_z + log_prior_old;
  // A current state with a zero estimate is left as soon as anything finite appears.
  const double log_ratio = current == kNegInf ? 0.0 : result.log_z + log_prior_new - current;
  if (!(log_u < log_ratio)) {
    return false;
  }
  particle = make_particle(std::move(candidate), std::move(result), lambda, model.prior, particle.id);
  return true;
}

bool mh_kernel_exact(ExactState& state, double lambda, const ModelSpec& model, const Dataset& data,
                     const RandomWalk& proposal, Rng& rng) {
  ParamVector candidate = proposal.propose(state.theta, rng);
  const double log_prior_new = model.prior.log_density(candidate);
  const double log_u = std::log(rng.uniform());
  if (log_prior_new == kNegInf) {
    return false;
  }
  const double log_lik_new = kalman_loglik(model, candidate, lambda, data);
  const double current = state.log_lik + model.prior.log_density(state.theta);
  const double log_ratio = current == kNegInf ? 0.0 : log_lik_new + log_prior_new - current;
  if (!(log_u < log_ratio)) {
    return false;
  }
  state.theta = std::move(candidate);
  state.log_lik = log_lik_new;
  return true;
}

Population init_population(const ModelSpec& model, const Dataset& data, const SamplerConfig& cfg,
                           MoveStats* warm_stats) {
  const double lambda_0 = cfg.tempering.lambda_0;
  if (!(lambda_0 > 0.0)) {
    throw std::invalid_argument("init_population: lambda_0 must be positive");
  }
  const RandomWalk warm = RandomWalk::diagonal(cfg.proposal.scale);
  Population population;
  population.lambda = lambda_0;
  population.step = 0;
  population.particles.resize(cfg.population);
  std::vector<std::uint8_t> events(cfg.population * cfg.warm_moves, 0);
  std::vector<std::uint8_t> prior_draw_ok(cfg.population, 0);

  parallel_for(cfg.population, cfg.threads, [&](std::size_t j) {
    auto prior_rng = Rng::stream(cfg.seed, Stream::kInitPrior, {j});
    auto warm_rng = Rng::stream(cfg.seed, Stream::kInitWarm, {j});
    ParamVector theta = model.prior.sample(prior_rng);
    PfResult first = run_bpf(model, theta, lambda_0, data, cfg.state_particles, warm_rng);
    prior_draw_ok[j] = first.log_z > kNegInf ? 1 : 0;
    ThetaParticle particle = make_particle(std::move(theta), std::move(first), lambda_0, model.prior, j);
    for (std::size_t m = 0; m < cfg.warm_moves; ++m) {
      events[j * cfg.warm_moves + m] =
          pmh_kernel(particle, lambda_0, model, data, warm, cfg.state_particles, warm_rng) ? 1 : 0;
    }
    population.particles[j] = std::move(particle);
  });

  bool any_ok = false;
  for (const auto ok : prior_draw_ok) {
    any_ok = any_ok || ok != 0;
  }
  if (!any_ok) {
    throw NumericalError("init_population: every prior draw has a zero likelihood estimate at lambda_0; "
                         "increase lambda_0");
  }
  if (warm_stats != nullptr) {
    warm_stats->events = std::move(events);
    warm_stats->proposed = warm_stats->events.size();
    warm_stats->accepted = 0;
    for (const auto e : warm_stats->events) {
      warm_stats->accepted += e;
    }
  }
  return population;
}

Population resample_population(const Population& population, std::span<const double> increments,
                               double lambda_new, const Prior& prior, Rng& rng, OuterResampling scheme) {
  const std::size_t count = population.particles.size();
  if (increments.size() != count) {
    throw std::invalid_argument("resample_population: one increment per particle is required");
  }
  std::vector<std::size_t> indices;
  try {
    indices = draw_indices(increments, count, rng, scheme);
  } catch (const DegenerateWeights&) {
    throw DegenerateWeights("resample_population: every incremental weight is zero (resampling collapse)");
  }
  Population next;
  next.lambda = lambda_new;
  next.step = population.step + 1;
  next.particles.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    ThetaParticle particle = population.particles[indices[j]];
    particle.id = j;
    particle.log_z = loglik_given_bundle(*particle.bundle, lambda_new);
    particle.log_ext_weight = extended_logweight(*particle.bundle, particle.theta, lambda_new, prior);
    next.particles.push_back(std::move(particle));
  }
  return next;
}

MoveStats rejuvenate(Population& population, const ModelSpec& model, const Dataset& data,
                     const RandomWalk& proposal, const SamplerConfig& cfg) {
  const std::size_t count = population.particles.size();
  MoveStats stats;
  stats.events.assign(count * cfg.sweeps, 0);
  parallel_for(count, cfg.threads, [&](std::size_t j) {
    ThetaParticle& particle = population.particles[j];
    auto rng = Rng::stream(cfg.seed, Stream::kMoves, {population.step, particle.id});
    for (std::size_t k = 0; k < cfg.sweeps; ++k) {
      stats.events[j * cfg.sweeps + k] =
          pmh_kernel(particle, population.lambda, model, data, proposal, cfg.state_particles, rng) ? 1 : 0;
    }
  });
  stats.proposed = stats.events.size();
  for (const auto e : stats.events) {
    stats.accepted += e;
  }
  return stats;
}

std::vector<ScheduleRow> RunOutput::schedule() const {
  std::vector<ScheduleRow> rows;
  rows.reserve(steps.size());
  for (const auto& step : steps) {
    rows.push_back({step.p, step.lambda, step.ess, step.accept_rate});
  }
  return rows;
}

RunOutput run_tempered_smc(const ModelSpec& model, const Dataset& data, const SamplerConfig& cfg) {
  cfg.validate(model, false);
  const auto start = std::chrono::steady_clock::now();
  RunOutput output;
  const auto& tcfg = cfg.tempering;

  MoveStats warm;
  Population population = init_population(model, data, cfg, &warm);
  output.state = TemperingState::initial(tcfg.lambda_0, cfg.population);
  output.steps.push_back({.p = 0,
                          .lambda = tcfg.lambda_0,
                          .ess = static_cast<double>(cfg.population),
                          .accept_rate = warm.rate(),
                          .accepted = warm.accepted,
                          .proposed = warm.proposed,
                          .solve_kind = LambdaSolution::Kind::kCrossing,
                          .thetas = thetas_of(population),
                          .move_events = std::move(warm.events)});
  if (cfg.on_step) {
    cfg.on_step(output.steps.back());
  }

  try {
    while (true) {
      output.termination = should_terminate(output.state, tcfg);
      if (output.termination.terminate) {
        break;
      }
      std::vector<const TrajectoryBundle*> bundles;
      bundles.reserve(population.particles.size());
      for (const auto& particle : population.particles) {
        bundles.push_back(particle.bundle.get());
      }
      const LambdaSolution solution = solve_lambda(bundles, population.lambda, tcfg, cfg.threads);
      const auto increments = incremental_logweights(bundles, solution.lambda, population.lambda, cfg.threads);

      auto resample_rng = Rng::stream(cfg.seed, Stream::kResample, {population.step + 1});
      population = resample_population(population, increments, solution.lambda, model.prior, resample_rng,
                                       cfg.resampling);

      const RandomWalk proposal = RandomWalk::for_population(cfg.proposal, thetas_of(population));
      MoveStats moves = rejuvenate(population, model, data, proposal, cfg);

      output.state.advance(solution.lambda, solution.ess, moves.rate());
      output.steps.push_back({.p = output.state.p,
                              .lambda = solution.lambda,
                              .ess = solution.ess,
                              .accept_rate = moves.rate(),
                              .accepted = moves.accepted,
                              .proposed = moves.proposed,
                              .solve_kind = solution.kind,
                              .thetas = thetas_of(population),
                              .move_events = std::move(moves.events)});
      if (cfg.on_step) {
        cfg.on_step(output.steps.back());
      }
    }
  } catch (const NumericalError& e) {
    output.samples = thetas_of(population);
    output.wall_seconds = elapsed_seconds(start);
    throw RunFailure(e.what(), std::move(output));
  }

  output.samples = thetas_of(population);
  output.wall_seconds = elapsed_seconds(start);
  return output;
}

RunOutput run_exact_tempered_smc(const ModelSpec& model, const Dataset& data, const SamplerConfig& cfg) {
  cfg.validate(model, true);
  const auto start = std::chrono::steady_clock::now();
  RunOutput output;
  const auto& tcfg = cfg.tempering;
  const std::size_t count = cfg.population;
  double lambda = tcfg.lambda_0;

  std::vector<ExactState> states(count);
  std::vector<std::uint8_t> warm_events(count * cfg.warm_moves, 0);
  const RandomWalk warm = RandomWalk::diagonal(cfg.proposal.scale);
  parallel_for(count, cfg.threads, [&](std::size_t j) {
    auto prior_rng = Rng::stream(cfg.seed, Stream::kInitPrior, {j});
    auto warm_rng = Rng::stream(cfg.seed, Stream::kInitWarm, {j});
    ExactState state;
    state.theta = model.prior.sample(prior_rng);
    state.log_lik = kalman_loglik(model, state.theta, lambda, data);
    for (std::size_t m = 0; m < cfg.warm_moves; ++m) {
      warm_events[j * cfg.warm_moves + m] = mh_kernel_exact(state, lambda, model, data, warm, warm_rng) ? 1 : 0;
    }
    states[j] = std::move(state);
  });
  std::size_t warm_accepted = 0;
  for (const auto e : warm_events) {
    warm_accepted += e;
  }
  const double warm_rate =
      warm_events.empty() ? 0.0 : static_cast<double>(warm_accepted) / static_cast<double>(warm_events.size());

  output.state = TemperingState::initial(lambda, count);
  output.steps.push_back({.p = 0,
                          .lambda = lambda,
                          .ess = static_cast<double>(count),
                          .accept_rate = warm_rate,
                          .accepted = warm_accepted,
                          .proposed = warm_events.size(),
                          .solve_kind = LambdaSolution::Kind::kCrossing,
                          .thetas = thetas_of(states),
                          .move_events = std::move(warm_events)});
  if (cfg.on_step) {
    cfg.on_step(output.steps.back());
  }

  try {
    while (true) {
      output.termination = should_terminate(output.state, tcfg);
      if (output.termination.terminate) {
        break;
      }
      const IncrementFn increments = [&](double candidate, std::vector<double>& out) {
        parallel_for(count, cfg.threads, [&](std::size_t j) {
          out[j] = kalman_loglik(model, states[j].theta, candidate, data) - states[j].log_lik;
        });
      };
      const LambdaSolution solution = solve_lambda(increments, count, lambda, tcfg);
      std::vector<double> refreshed(count);
      std::vector<double> weights(count);
      parallel_for(count, cfg.threads, [&](std::size_t j) {
        refreshed[j] = kalman_loglik(model, states[j].theta, solution.lambda, data);
        weights[j] = refreshed[j] - states[j].log_lik;
      });

      auto resample_rng = Rng::stream(cfg.seed, Stream::kResample, {output.state.p + 1});
      const auto indices = draw_indices(weights, count, resample_rng, cfg.resampling);
      std::vector<ExactState> next(count);
      for (std::size_t j = 0; j < count; ++j) {
        next[j] = states[indices[j]];
        next[j].log_lik = refreshed[indices[j]];
      }
      states = std::move(next);
      lambda = solution.lambda;

      const std::size_t step = output.state.p + 1;
      const RandomWalk proposal = RandomWalk::for_population(cfg.proposal, thetas_of(states));
      std::vector<std::uint8_t> events(count * cfg.sweeps, 0);
      parallel_for(count, cfg.threads, [&](std::size_t j) {
        auto rng = Rng::stream(cfg.seed, Stream::kMoves, {step, j});
        for (std::size_t k = 0; k < cfg.sweeps; ++k) {
          events[j * cfg.sweeps + k] = mh_kernel_exact(states[j], lambda, model, data, proposal, rng) ? 1 : 0;
        }
      });
      std::size_t accepted = 0;
      for (const auto e : events) {
        accepted += e;
      }
      const double rate = static_cast<double>(accepted) / static_cast<double>(events.size());

      output.state.advance(solution.lambda, solution.ess, rate);
      output.steps.push_back({.p = output.state.p,
                              .lambda = solution.lambda,
                              .ess = solution.ess,
                              .accept_rate = rate,
                              .accepted = accepted,
                              .proposed = events.size(),
                              .solve_kind = solution.kind,
                              .thetas = thetas_of(states),
                              .move_events = std::move(events)});
      if (cfg.on_step) {
        cfg.on_step(output.steps.back());
      }
    }
  } catch (const NumericalError& e) {
    output.samples = thetas_of(states);
    output.wall_seconds = elapsed_seconds(start);
    throw RunFailure(e.what(), std::move(output));
  }

  output.samples = thetas_of(states);
  output.wall_seconds = elapsed_seconds(start);
  return output;
}

MhChain run_pmh(const ModelSpec& model, const Dataset& data, double lambda, std::size_t length,
                const RandomWalk& proposal, std::span<const double> theta_init, std::size_t state_particles,
                std::uint64_t seed) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("run_pmh: lambda must be positive");
  }
  auto rng = Rng::stream(seed, Stream::kPmhChain);
  ParamVector theta(theta_init.begin(), theta_init.end());
  ThetaParticle particle = make_particle(theta, run_bpf(model, theta, lambda, data, state_particles, rng), lambda,
                                         model.prior, 0);
  MhChain chain;
  chain.samples.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    if (pmh_kernel(particle, lambda, model, data, proposal, state_particles, rng)) {
      ++chain.accepted;
    }
    chain.samples.push_back(particle.theta);
  }
  return chain;
}

MhChain run_exact_mh(const ModelSpec& model, const Dataset& data, double lambda, std::size_t length,
                     const RandomWalk& proposal, std::span<const double> theta_init, std::uint64_t seed) {
  auto rng = Rng::stream(seed, Stream::kPmhChain);
  ExactState state{ParamVector(theta_init.begin(), theta_init.end()), 0.0};
  state.log_lik = kalman_loglik(model, state.theta, lambda, data);
  MhChain chain;
  chain.samples.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    if (mh_kernel_exact(state, lambda, model, data, proposal, rng)) {
      ++chain.accepted;
    }
    chain.samples.push_back(state.theta);
  }
  return chain;
}

void write_samples_csv(std::span<const ParamVector> samples, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17) << 'j';
  const std::size_t dim = samples.empty() ? 0 : samples.front().size();
  for (std::size_t i = 0; i < dim; ++i) {
    out << ",theta_" << i + 1;
  }
  out << '\n';
  for (std::size_t j = 0; j < samples.size(); ++j) {
    out << j + 1;
    for (const double v : samples[j]) {
      out << ',' << v;
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace tsmc
