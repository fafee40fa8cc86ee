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

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <vector>

#include "tsmc/errors.hpp"
#include "tsmc/model.hpp"

namespace {

using tsmc::Dataset;

TEST(ObsLogdensity, ExactMatchGivesZeroAtUnitNormalizer) {
  const std::vector<double> y{0.3};
  EXPECT_NEAR(tsmc::obs_logdensity(y, y, 1.0 / (2.0 * std::numbers::pi)), 0.0, 1e-15);
}

TEST(ObsLogdensity, UnitResidual) {
  const std::vector<double> y{1.0};
  const std::vector<double> g{0.0};
  EXPECT_NEAR(tsmc::obs_logdensity(y, g, 1.0), -0.5 * std::log(2.0 * std::numbers::pi) - 0.5, 1e-14);
  EXPECT_NEAR(tsmc::obs_logdensity(y, g, 1.0), -1.41894, 1e-5);
}

TEST(ObsLogdensity, TinyVarianceStaysFinite) {
  const std::vector<double> y{1.0};
  const std::vector<double> g{0.0};
  for (const double lambda : {1e-10, 1e-100, 1e-300}) {
    const double value = tsmc::obs_logdensity(y, g, lambda);
    EXPECT_FALSE(std::isnan(value));
    EXPECT_TRUE(std::isfinite(value));
    EXPECT_LT(value, -1e9);
  }
}

TEST(ObsLogdensity, RejectsNonPositiveVariance) {
  const std::vector<double> y{1.0};
  EXPECT_THROW((void)tsmc::obs_logdensity(y, y, 0.0), std::domain_error);
  EXPECT_THROW((void)tsmc::obs_logdensity(y, y, -1.0), std::domain_error);
}

TEST(ObsLogdensity, ResidualFormMatchesVectorForm) {
  const std::vector<double> y{1.0, -2.0, 0.5};
  const std::vector<double> g{0.5, 0.0, 0.25};
  const double r = 0.25 + 4.0 + 0.0625;
  EXPECT_NEAR(tsmc::obs_logdensity_from_residual(r, 3, 0.7), tsmc::obs_logdensity(y, g, 0.7), 1e-13);
}

TEST(LinearModel, NoiseFreeTransitionByHand) {
  const auto model = tsmc::make_linear_model();
  // x' = [[1, th1], [0, 0.1]] x + [th2, 0] u with zero noise: take the linear form.
  const std::vector<double> theta{0.8, -1.0};
  const auto form = model.linear_form(theta);
  Eigen::Vector2d x{1.0, 0.0};
  const Eigen::VectorXd next = form.A * x + form.B * Eigen::VectorXd::Zero(1);
  EXPECT_DOUBLE_EQ(next(0), 1.0);
  EXPECT_DOUBLE_EQ(next(1), 0.0);
  EXPECT_DOUBLE_EQ(form.A(0, 1), 0.8);
  EXPECT_DOUBLE_EQ(form.B(0, 0), -1.0);
}

TEST(LinearModel, TransitionMeanMatchesLinearForm) {
  const auto model = tsmc::make_linear_model();
  const std::vector<double> theta{0.8, -1.0};
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> u{0.5};
  const auto form = model.linear_form(theta);
  const Eigen::Vector2d mean = form.A * Eigen::Vector2d{1.0, 2.0} + form.B * Eigen::VectorXd::Constant(1, 0.5);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  constexpr int kDraws = 20000;
  tsmc::Rng rng(3);
  std::vector<double> next(2);
  for (int i = 0; i < kDraws; ++i) {
    model.transition(theta, x, u, rng, next);
    sum += Eigen::Vector2d{next[0], next[1]};
  }
  sum /= kDraws;
  // Unit process noise: 5 standard errors.
  EXPECT_NEAR(sum(0), mean(0), 5.0 / std::sqrt(kDraws));
  EXPECT_NEAR(sum(1), mean(1), 5.0 / std::sqrt(kDraws));
}

TEST(AtanModel, FixedPointAtZero) {
  const auto model = tsmc::make_atan_model();
  const std::vector<double> theta{1.0, 1.0};
  // atan(0) + theta_1 * 0 plus noise: the noise-free part vanishes, so the
  // draw equals the process noise alone. Average many draws.
  const std::vector<double> x{0.0};
  const std::vector<double> u{0.0};
  tsmc::Rng rng(5);
  std::vector<double> next(1);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    model.transition(theta, x, u, rng, next);
    sum += next[0];
  }
  EXPECT_NEAR(sum / 20000.0, 0.0, 5.0 / std::sqrt(20000.0));
}

TEST(AtanModel, ObservationByHand) {
  const auto model = tsmc::make_atan_model();
  const std::vector<double> theta{1.0, 1.0};
  const std::vector<double> x{-2.0};
  std::vector<double> y(1);
  model.observe(theta, x, y);
  EXPECT_DOUBLE_EQ(y[0], 3.0);
}

TEST(Priors, UniformBoxSupport) {
  const auto prior = tsmc::Prior::uniform_box({-1.0, 0.0}, {1.0, 2.0});
  EXPECT_TRUE(std::isfinite(prior.log_density(std::vector<double>{0.0, 1.0})));
  EXPECT_EQ(prior.log_density(std::vector<double>{1.5, 1.0}), -std::numeric_limits<double>::infinity());
  EXPECT_NEAR(prior.log_density(std::vector<double>{0.0, 1.0}), -std::log(4.0), 1e-15);
  tsmc::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto draw = prior.sample(rng);
    EXPECT_TRUE(std::isfinite(prior.log_density(draw)));
  }
}

TEST(Simulate, ShapeOfLinearDataset) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 200, 11);
  EXPECT_EQ(data.horizon(), 200U);
  EXPECT_EQ(data.input_dim(), 1U);
  EXPECT_EQ(data.obs_dim(), 1U);
  ASSERT_TRUE(data.true_states.has_value());
  EXPECT_EQ(data.true_states->size(), 400U);
}

TEST(Simulate, SingleStepObservesInitialState) {
  const auto model = tsmc::make_atan_model();
  const std::vector<double> theta{1.0, 1.0};
  const Dataset data = tsmc::simulate(model, theta, 1, 4);
  ASSERT_EQ(data.horizon(), 1U);
  ASSERT_TRUE(data.true_states.has_value());
  std::vector<double> y(1);
  model.observe(theta, std::span<const double>(data.true_states->data(), 1), y);
  EXPECT_EQ(data.observation(0)[0], y[0]);
}

TEST(Simulate, SameSeedSameBits) {
  const auto model = tsmc::make_atan_model();
  const std::vector<double> theta{1.0, 1.0};
  const Dataset a = tsmc::simulate(model, theta, 50, 9);
  const Dataset b = tsmc::simulate(model, theta, 50, 9);
  const Dataset c = tsmc::simulate(model, theta, 50, 10);
  EXPECT_EQ(a.inputs(), b.inputs());
  EXPECT_EQ(a.observations(), b.observations());
  EXPECT_NE(a.observations(), c.observations());
}

TEST(Simulate, DivergenceNamesTimeIndex) {
  auto model = tsmc::make_atan_model();
  model.transition = [](std::span<const double>, std::span<const double> x, std::span<const double>, tsmc::Rng&,
                        std::span<double> next) { next[0] = x[0] * 1e200; };
  model.init_state = [](std::span<const double>, tsmc::Rng&, std::span<double> x) { x[0] = 1e200; };
  try {
    (void)tsmc::simulate(model, std::vector<double>{1.0, 1.0}, 10, 1);
    FAIL() << "expected SimulationDivergence";
  } catch (const tsmc::SimulationDivergence& e) {
    EXPECT_EQ(e.time_index(), 1U);
  }
}

TEST(DatasetCsv, RoundTripIsExact) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 30, 2);
  const auto path = std::filesystem::temp_directory_path() / "tsmc_dataset_roundtrip.csv";
  tsmc::write_dataset_csv(data, path);
  const Dataset back = tsmc::read_dataset_csv(path);
  EXPECT_EQ(back.inputs(), data.inputs());
  EXPECT_EQ(back.observations(), data.observations());
  std::filesystem::remove(path);
}

TEST(DatasetCsv, MissingFileIsIoError) {
  EXPECT_THROW((void)tsmc::read_dataset_csv("/nonexistent/data.csv"), tsmc::IoError);
}

TEST(Dataset, RejectsNonFiniteValues) {
  EXPECT_THROW(Dataset(1, 1, {0.0}, {std::nan("")}), std::invalid_argument);
  EXPECT_THROW(Dataset(1, 1, {0.0, 1.0}, {0.0}), std::invalid_argument);
}

TEST(Registry, BuiltinsAndCustomModels) {
  EXPECT_TRUE(tsmc::find_model("linear").has_value());
  EXPECT_TRUE(tsmc::find_model("atan").has_value());
  EXPECT_FALSE(tsmc::find_model("no-such-model").has_value());
  tsmc::register_model("external-test", [] { return tsmc::make_atan_model(); });
  EXPECT_TRUE(tsmc::find_model("external-test").has_value());
}

}  // namespace
