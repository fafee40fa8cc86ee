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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tsmc/errors.hpp"
#include "tsmc/exact_inference.hpp"
#include "tsmc/smc_sampler.hpp"

namespace {

using tsmc::Dataset;
using tsmc::Population;
using tsmc::RandomWalk;
using tsmc::SamplerConfig;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

SamplerConfig small_config() {
  SamplerConfig cfg;
  cfg.state_particles = 20;
  cfg.population = 30;
  cfg.sweeps = 2;
  cfg.warm_moves = 2;
  cfg.tempering.lambda_0 = 10.0;
  cfg.tempering.lambda_target = 0.1;
  cfg.tempering.accept_floor = 0.0;
  cfg.proposal.scale = {0.1, 0.1};
  cfg.seed = 11;
  return cfg;
}

Dataset linear_data(std::size_t horizon, std::uint64_t seed = 5) {
  return tsmc::simulate(tsmc::make_linear_model(), std::vector<double>{0.8, -1.0}, horizon, seed);
}

TEST(RandomWalk, AdaptedCovarianceIsScaledPopulationCovariance) {
  tsmc::Rng rng(1);
  std::vector<tsmc::ParamVector> thetas(500);
  for (auto& t : thetas) {
    const double a = rng.normal();
    t = {1.0 + 0.5 * a, -2.0 + 0.2 * a + 0.1 * rng.normal()};
  }
  const auto walk = RandomWalk::for_population({{0.1, 0.1}, true}, thetas);
  const Eigen::MatrixXd cov = walk.factor() * walk.factor().transpose();

  Eigen::Matrix2d expected = Eigen::Matrix2d::Zero();
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& t : thetas) {
    mean += Eigen::Vector2d{t[0], t[1]};
  }
  mean /= 500.0;
  for (const auto& t : thetas) {
    const Eigen::Vector2d c = Eigen::Vector2d{t[0], t[1]} - mean;
    expected += c * c.transpose();
  }
  expected *= 2.38 * 2.38 / 2.0 / 499.0;
  EXPECT_TRUE(cov.isApprox(expected, 1e-12));
}

TEST(RandomWalk, FallsBackToDiagonal) {
  const std::vector<tsmc::ParamVector> identical(10, {0.3, 0.3});
  const auto collapsed = RandomWalk::for_population({{0.2, 0.5}, true}, identical);
  EXPECT_DOUBLE_EQ(collapsed.factor()(0, 0), 0.2);
  EXPECT_DOUBLE_EQ(collapsed.factor()(1, 1), 0.5);
  const auto fixed = RandomWalk::for_population({{0.2, 0.5}, false}, std::vector<tsmc::ParamVector>{});
  EXPECT_DOUBLE_EQ(fixed.factor()(1, 1), 0.5);
}

TEST(ExactMh, ZeroVarianceProposalAlwaysAcceptsAndStays) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(20);
  const std::vector<double> start{0.5, -0.5};
  const auto chain =
      tsmc::run_exact_mh(model, data, 0.5, 200, RandomWalk::from_factor(Eigen::MatrixXd::Zero(2, 2)), start, 3);
  ASSERT_EQ(chain.samples.size(), 200U);
  EXPECT_EQ(chain.accepted, 200U);
  for (const auto& s : chain.samples) {
    EXPECT_EQ(s, start);
  }
}

TEST(Pmh, OffSupportProposalsAreRejected) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(10);
  const std::vector<double> scale{1e6, 1e6};
  const auto chain = tsmc::run_pmh(model, data, 1.0, 300, RandomWalk::diagonal(scale), std::vector<double>{0.8, -1.0},
                                   10, 4);
  EXPECT_EQ(chain.samples.size(), 300U);
  EXPECT_EQ(chain.accepted, 0U);
  EXPECT_EQ(chain.acceptance_rate(), 0.0);
}

TEST(InitPopulation, FlatLikelihoodReproducesPrior) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(10);
  auto cfg = small_config();
  cfg.population = 600;
  cfg.tempering.lambda_0 = 1e12;
  cfg.warm_moves = 3;
  tsmc::MoveStats warm;
  const Population population = tsmc::init_population(model, data, cfg, &warm);
  ASSERT_EQ(population.particles.size(), 600U);
  EXPECT_TRUE(tsmc::cache_coherent(population));
  EXPECT_EQ(warm.proposed, 600U * 3U);
  const double prior_sd = 5.0 / std::sqrt(12.0);
  for (std::size_t a = 0; a < 2; ++a) {
    double mean = 0.0;
    double sq = 0.0;
    for (const auto& p : population.particles) {
      mean += p.theta[a];
      sq += p.theta[a] * p.theta[a];
    }
    mean /= 600.0;
    const double sd = std::sqrt(sq / 600.0 - mean * mean);
    EXPECT_LT(std::abs(mean), 4.0 * prior_sd / std::sqrt(600.0));
    EXPECT_NEAR(sd, prior_sd, 0.15);
  }
}

TEST(InitPopulation, AllZeroEstimatesAdviseLargerLambda) {
  auto model = tsmc::make_linear_model();
  model.observe = [](std::span<const double>, std::span<const double>, std::span<double> y) {
    y[0] = std::numeric_limits<double>::infinity();
  };
  const Dataset data(1, 1, {0.0, 0.0}, {1.0, 0.0});
  auto cfg = small_config();
  try {
    (void)tsmc::init_population(model, data, cfg);
    FAIL() << "expected a numerical error";
  } catch (const tsmc::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("lambda_0"), std::string::npos);
  }
}

/// A population of cheap bundles with prescribed thetas.
Population toy_population(std::size_t count) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(3);
  Population population;
  population.lambda = 1.0;
  for (std::size_t j = 0; j < count; ++j) {
    auto rng = tsmc::Rng::stream(1, tsmc::Stream::kCheck, {j});
    tsmc::ThetaParticle p;
    p.theta = {-2.0 + 0.1 * static_cast<double>(j), 0.0};
    const auto result = tsmc::run_bpf(model, p.theta, 1.0, data, 4, rng);
    p.bundle = result.bundle;
    p.log_z = result.log_z;
    p.id = j;
    population.particles.push_back(std::move(p));
  }
  return population;
}

TEST(ResamplePopulation, DominantParticleIsCopied) {
  const auto prior = tsmc::make_linear_model().prior;
  const Population population = toy_population(8);
  std::vector<double> increments(8, kNegInf);
  increments[5] = -2.0;
  tsmc::Rng rng(2);
  const Population next = tsmc::resample_population(population, increments, 0.5, prior, rng);
  EXPECT_EQ(next.lambda, 0.5);
  EXPECT_EQ(next.step, 1U);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(next.particles[j].theta, population.particles[5].theta);
    EXPECT_EQ(next.particles[j].id, j);
  }
  EXPECT_TRUE(tsmc::cache_coherent(next));
}

TEST(ResamplePopulation, CollapseThrows) {
  const auto prior = tsmc::make_linear_model().prior;
  const std::vector<double> increments(4, kNegInf);
  tsmc::Rng rng(2);
  EXPECT_THROW((void)tsmc::resample_population(toy_population(4), increments, 0.5, prior, rng),
               tsmc::DegenerateWeights);
}

TEST(ResamplePopulation, EqualIncrementsGiveUniformOffspring) {
  const auto prior = tsmc::make_linear_model().prior;
  constexpr std::size_t kCount = 10;
  constexpr int kReps = 10000;
  const Population population = toy_population(kCount);
  const std::vector<double> increments(kCount, 0.0);
  std::vector<double> offspring(kCount, 0.0);
  for (int rep = 0; rep < kReps; ++rep) {
    auto rng = tsmc::Rng::stream(4, tsmc::Stream::kResample, {static_cast<std::uint64_t>(rep)});
    const Population next = tsmc::resample_population(population, increments, 0.5, prior, rng);
    for (const auto& p : next.particles) {
      const auto source = static_cast<std::size_t>(std::lround((p.theta[0] + 2.0) / 0.1));
      offspring[source] += 1.0;
    }
  }
  const double expected = static_cast<double>(kReps);
  double chi2 = 0.0;
  for (const double o : offspring) {
    chi2 += (o - expected) * (o - expected) / expected;
  }
  // Chi-square with 9 degrees of freedom: mean 9, sd sqrt(18).
  EXPECT_LT(chi2, 9.0 + 4.0 * std::sqrt(18.0));
}

TEST(Rejuvenate, ExchangeableUnderPermutation) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(3);
  auto cfg = small_config();
  cfg.state_particles = 4;
  Population population = toy_population(12);
  population.step = 3;
  Population permuted = population;
  std::reverse(permuted.particles.begin(), permuted.particles.end());
  const auto walk = RandomWalk::diagonal(cfg.proposal.scale);
  (void)tsmc::rejuvenate(population, model, data, walk, cfg);
  (void)tsmc::rejuvenate(permuted, model, data, walk, cfg);
  std::reverse(permuted.particles.begin(), permuted.particles.end());
  for (std::size_t j = 0; j < 12; ++j) {
    EXPECT_EQ(population.particles[j].theta, permuted.particles[j].theta);
    EXPECT_EQ(population.particles[j].log_z, permuted.particles[j].log_z);
  }
  EXPECT_TRUE(tsmc::cache_coherent(population));
}

TEST(Rejuvenate, AcceptanceBookkeeping) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(3);
  auto cfg = small_config();
  cfg.sweeps = 5;
  Population population = toy_population(12);
  const auto stats = tsmc::rejuvenate(population, model, data, RandomWalk::diagonal(cfg.proposal.scale), cfg);
  EXPECT_EQ(stats.proposed, 60U);
  EXPECT_EQ(stats.events.size(), 60U);
  EXPECT_EQ(stats.accepted, static_cast<std::size_t>(std::accumulate(stats.events.begin(), stats.events.end(), 0)));
  EXPECT_GE(stats.rate(), 0.0);
  EXPECT_LE(stats.rate(), 1.0);
}

TEST(CacheCoherence, DetectsStaleLambda) {
  Population population = toy_population(5);
  EXPECT_TRUE(tsmc::cache_coherent(population));
  population.lambda = 1.0 + 1e-9;
  EXPECT_FALSE(tsmc::cache_coherent(population));
}

TEST(TemperedSmc, ScheduleDecreasesAndTerminates) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(30);
  const auto cfg = small_config();
  const auto output = tsmc::run_tempered_smc(model, data, cfg);
  EXPECT_TRUE(output.termination.terminate);
  EXPECT_EQ(output.termination.describe(), "target-reached");
  EXPECT_EQ(output.state.lambda, cfg.tempering.lambda_target);
  const auto schedule = output.schedule();
  ASSERT_EQ(schedule.size(), output.state.p + 1);
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    EXPECT_LT(schedule[i].lambda, schedule[i - 1].lambda);
    EXPECT_EQ(output.steps[i].accept_rate,
              static_cast<double>(output.steps[i].accepted) / static_cast<double>(output.steps[i].proposed));
  }
  EXPECT_EQ(output.samples.size(), cfg.population);
}

TEST(TemperedSmc, ReproducibleAcrossThreadCounts) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(30);
  auto cfg = small_config();
  const auto one = tsmc::run_tempered_smc(model, data, cfg);
  cfg.threads = 3;
  const auto three = tsmc::run_tempered_smc(model, data, cfg);
  EXPECT_EQ(one.samples, three.samples);
  EXPECT_EQ(one.state.lambda_history, three.state.lambda_history);
}

TEST(ExactTemperedSmc, LargerAlphaTakesMoreSteps) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(50);
  auto cfg = small_config();
  cfg.population = 100;
  cfg.tempering.lambda_target = 0.0;
  cfg.tempering.alpha = 0.3;
  const auto fast = tsmc::run_exact_tempered_smc(model, data, cfg);
  cfg.tempering.alpha = 0.9;
  const auto slow = tsmc::run_exact_tempered_smc(model, data, cfg);
  EXPECT_GT(slow.state.p, fast.state.p);
}

TEST(ExactTemperedSmc, FinalMeanMatchesGrid) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = linear_data(60, 9);
  auto cfg = small_config();
  cfg.population = 300;
  cfg.sweeps = 5;
  cfg.tempering.lambda_target = 0.0;
  const auto output = tsmc::run_exact_tempered_smc(model, data, cfg);
  EXPECT_EQ(output.state.lambda, 0.0);
  const auto grid = tsmc::grid_posterior(model, 0.0, data, tsmc::default_grid_axes(model, 100));
  for (std::size_t a = 0; a < 2; ++a) {
    double mean = 0.0;
    for (const auto& s : output.samples) {
      mean += s[a];
    }
    mean /= static_cast<double>(output.samples.size());
    EXPECT_NEAR(mean, grid.mean()[a], 0.1);
  }
}

TEST(SamplerConfig, Validation) {
  const auto model = tsmc::make_linear_model();
  auto cfg = small_config();
  EXPECT_NO_THROW(cfg.validate(model, false));
  cfg.state_particles = 1;
  EXPECT_THROW(cfg.validate(model, false), std::invalid_argument);
  EXPECT_NO_THROW(cfg.validate(model, true));
  cfg = small_config();
  cfg.proposal.scale = {0.1};
  EXPECT_THROW(cfg.validate(model, false), std::invalid_argument);
  EXPECT_THROW(cfg.validate(tsmc::make_atan_model(), true), std::invalid_argument);
}

}  // namespace
