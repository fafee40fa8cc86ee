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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tsmc/errors.hpp"
#include "tsmc/exact_inference.hpp"
#include "tsmc/model.hpp"

namespace {

using tsmc::Dataset;
using tsmc::GridAxis;

/// log p(y_{1:T}) from the joint Gaussian of the stacked observations,
/// built directly from the noise decomposition x_t = m_t + M_t zeta.
double joint_gaussian_loglik(const tsmc::LinearGaussianForm& f, double lambda, const Dataset& data) {
  const auto dx = static_cast<Eigen::Index>(f.A.rows());
  const auto dy = static_cast<Eigen::Index>(f.C.rows());
  const auto horizon = static_cast<Eigen::Index>(data.horizon());
  const Eigen::MatrixXd l1 = f.P1.llt().matrixL();
  const Eigen::MatrixXd lq = f.Q.llt().matrixL();

  Eigen::VectorXd m = f.mu1;
  Eigen::MatrixXd map = Eigen::MatrixXd::Zero(dx, dx * horizon);
  map.leftCols(dx) = l1;
  Eigen::VectorXd mean(dy * horizon);
  Eigen::MatrixXd rows(dy * horizon, dx * horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    mean.segment(t * dy, dy) = f.C * m;
    rows.middleRows(t * dy, dy) = f.C * map;
    const auto u = data.input(static_cast<std::size_t>(t));
    const Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
    m = f.A * m + f.B * uv;
    map = f.A * map;
    if (t + 1 < horizon) {
      map.middleCols((t + 1) * dx, dx) += lq;
    }
  }
  const Eigen::MatrixXd cov =
      rows * rows.transpose() + lambda * Eigen::MatrixXd::Identity(dy * horizon, dy * horizon);
  Eigen::VectorXd y(dy * horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    for (Eigen::Index k = 0; k < dy; ++k) {
      y(t * dy + k) = data.observation(static_cast<std::size_t>(t))[static_cast<std::size_t>(k)];
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const Eigen::VectorXd diff = y - mean;
  const double quad = diff.dot(ldlt.solve(diff));
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * (static_cast<double>(dy * horizon) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

tsmc::LinearGaussianForm scalar_random_walk() {
  tsmc::LinearGaussianForm f;
  f.A = Eigen::MatrixXd::Identity(1, 1);
  f.B = Eigen::MatrixXd::Zero(1, 1);
  f.C = Eigen::MatrixXd::Identity(1, 1);
  f.Q = Eigen::MatrixXd::Identity(1, 1);
  f.mu1 = Eigen::VectorXd::Zero(1);
  f.P1 = Eigen::MatrixXd::Identity(1, 1);
  return f;
}

TEST(KalmanLoglik, OneStepScalarByHand) {
  const Dataset data(1, 1, {0.0}, {0.0});
  EXPECT_NEAR(tsmc::kalman_loglik(scalar_random_walk(), 1.0, data), -0.5 * std::log(4.0 * std::numbers::pi), 1e-14);
}

TEST(KalmanLoglik, MatchesJointGaussianOnLinearModel) {
  const auto model = tsmc::make_linear_model();
  const std::vector<double> theta{0.8, -1.0};
  const Dataset data = tsmc::simulate(model, theta, 12, 21);
  for (const std::vector<double> th : {std::vector<double>{0.8, -1.0}, {-1.3, 0.4}, {2.0, 2.0}}) {
    for (const double lambda : {0.0, 0.01, 1.0, 10.0}) {
      const double expected = joint_gaussian_loglik(model.linear_form(th), lambda, data);
      EXPECT_NEAR(tsmc::kalman_loglik(model, th, lambda, data), expected, 1e-8 * std::max(1.0, std::abs(expected)))
          << "lambda " << lambda;
    }
  }
}

TEST(KalmanLoglik, ContinuousInLambda) {
  const auto model = tsmc::make_linear_model();
  const std::vector<double> theta{0.8, -1.0};
  const Dataset data = tsmc::simulate(model, theta, 50, 3);
  for (const double lambda : {0.0, 0.01, 1.0}) {
    const double step = 1e-8;
    const double coarse = 1e-4;
    const double slope = (tsmc::kalman_loglik(model, theta, lambda + 2 * coarse, data) -
                          tsmc::kalman_loglik(model, theta, lambda, data)) /
                         (2 * coarse);
    const double jump = tsmc::kalman_loglik(model, theta, lambda + step, data) -
                        tsmc::kalman_loglik(model, theta, lambda, data);
    EXPECT_LT(std::abs(jump), 10.0 * step * std::max(1.0, std::abs(slope))) << "lambda " << lambda;
  }
}

TEST(KalmanLoglik, SingularInnovationIsNumericalError) {
  auto f = scalar_random_walk();
  f.P1 = Eigen::MatrixXd::Zero(1, 1);
  const Dataset data(1, 1, {0.0}, {0.0});
  EXPECT_THROW((void)tsmc::kalman_loglik(f, 0.0, data), tsmc::NumericalError);
}

TEST(GridPosterior, SingleNodeHasUnitMass) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 20, 1);
  const auto grid =
      tsmc::grid_posterior(model, 1.0, data, {GridAxis::linspace(0.8, 0.8, 1), GridAxis::linspace(-1.0, -1.0, 1)});
  ASSERT_EQ(grid.node_count(), 1U);
  EXPECT_DOUBLE_EQ(grid.masses[0], 1.0);
}

TEST(GridPosterior, HugeLambdaFlattens) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 20, 1);
  const auto grid = tsmc::grid_posterior(model, 1e12, data, tsmc::default_grid_axes(model, 20));
  const auto [lo, hi] = std::minmax_element(grid.masses.begin(), grid.masses.end());
  EXPECT_NEAR(*hi / *lo, 1.0, 1e-6);
}

TEST(GridPosterior, ContractsAroundTruthAsLambdaShrinks) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 200, 1);
  // theta_1 enters only through theta_1 * x_2 with x_2 pure noise, so the
  // likelihood is even in theta_1; look at the positive half.
  const std::vector<GridAxis> axes{GridAxis::linspace(0.0, 2.5, 60), GridAxis::linspace(-2.5, 2.5, 60)};
  const auto wide = tsmc::grid_posterior(model, 10.0, data, axes);
  const auto narrow = tsmc::grid_posterior(model, 0.01, data, axes);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_LT(narrow.stddev()[a], wide.stddev()[a]);
  }
  EXPECT_NEAR(narrow.mean()[0], 0.8, 0.15);
  EXPECT_NEAR(narrow.mean()[1], -1.0, 0.15);
}

TEST(GridPosterior, EvenInTheta1) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 50, 1);
  const auto grid = tsmc::grid_posterior(model, 0.1, data, tsmc::default_grid_axes(model, 21));
  for (std::size_t i = 0; i < 21; ++i) {
    for (std::size_t j = 0; j < 21; ++j) {
      EXPECT_NEAR(grid.masses[i * 21 + j], grid.masses[(20 - i) * 21 + j], 1e-12);
    }
  }
}

TEST(GridPosterior, MassesSumToOne) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 50, 1);
  const auto grid = tsmc::grid_posterior(model, 0.0, data, tsmc::default_grid_axes(model, 30), 2);
  double total = 0.0;
  for (const double m : grid.masses) {
    total += m;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(grid.node(1)[0], grid.axes[0].points[0]);
  EXPECT_EQ(grid.node(1)[1], grid.axes[1].points[1]);
}

TEST(GridPosterior, EquivariantUnderAxisSwap) {
  const auto model = tsmc::make_linear_model();
  auto swapped = model;
  swapped.linear_form = [base = model.linear_form](std::span<const double> th) {
    const std::vector<double> original{th[1], th[0]};
    return base(original);
  };
  swapped.prior = tsmc::Prior::uniform_box({-2.5, -2.5}, {2.5, 2.5});
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 40, 8);
  const auto a0 = GridAxis::linspace(-1.0, 2.0, 17);
  const auto a1 = GridAxis::linspace(-2.0, 0.5, 13);
  const auto grid = tsmc::grid_posterior(model, 0.5, data, {a0, a1});
  const auto flipped = tsmc::grid_posterior(swapped, 0.5, data, {a1, a0});
  for (std::size_t i = 0; i < 17; ++i) {
    for (std::size_t j = 0; j < 13; ++j) {
      EXPECT_NEAR(grid.masses[i * 13 + j], flipped.masses[j * 17 + i], 1e-14);
    }
  }
}

TEST(GridPosterior, ThreadCountDoesNotChangeMasses) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 30, 8);
  const auto axes = tsmc::default_grid_axes(model, 25);
  EXPECT_EQ(tsmc::grid_posterior(model, 0.1, data, axes, 1).masses,
            tsmc::grid_posterior(model, 0.1, data, axes, 4).masses);
}

TEST(GridPosterior, EmptySupportIsNumericalError) {
  const auto model = tsmc::make_linear_model();
  const Dataset data = tsmc::simulate(model, std::vector<double>{0.8, -1.0}, 10, 8);
  EXPECT_THROW((void)tsmc::grid_posterior(model, 1.0, data,
                                          {GridAxis::linspace(3.0, 4.0, 5), GridAxis::linspace(3.0, 4.0, 5)}),
               tsmc::NumericalError);
}

}  // namespace
