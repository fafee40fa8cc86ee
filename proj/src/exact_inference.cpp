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

#include "tsmc/exact_inference.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "tsmc/errors.hpp"
#include "tsmc/io.hpp"
#include "tsmc/math.hpp"
#include "tsmc/parallel.hpp"

namespace tsmc {

double kalman_loglik(const ModelSpec& model, std::span<const double> theta, double lambda, const Dataset& data) {
  if (!model.is_linear_gaussian()) {
    throw std::invalid_argument("kalman_loglik: model '" + model.name + "' has no linear-Gaussian form");
  }
  return kalman_loglik(model.linear_form(theta), lambda, data);
}

double kalman_loglik(const LinearGaussianForm& form, double lambda, const Dataset& data) {
  if (!(lambda >= 0.0)) {
    throw std::domain_error("kalman_loglik: lambda must be >= 0");
  }
  const auto nx = form.A.rows();
  const auto ny = form.C.rows();
  if (static_cast<std::size_t>(ny) != data.obs_dim() || form.B.cols() != static_cast<Eigen::Index>(data.input_dim())) {
    throw std::invalid_argument("kalman_loglik: system matrices do not match the dataset dimensions");
  }

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(nx, nx);
  const Eigen::MatrixXd noise = lambda * Eigen::MatrixXd::Identity(ny, ny);
  Eigen::VectorXd mean = form.mu1;
  Eigen::MatrixXd cov = form.P1;
  double loglik = 0.0;

  for (std::size_t t = 0; t < data.horizon(); ++t) {
    const auto obs = data.observation(t);
    const Eigen::Map<const Eigen::VectorXd> y(obs.data(), ny);
    const Eigen::VectorXd innovation = y - form.C * mean;
    Eigen::MatrixXd innovation_cov = form.C * cov * form.C.transpose() + noise;
    innovation_cov = 0.5 * (innovation_cov + innovation_cov.transpose());

    const Eigen::LLT<Eigen::MatrixXd> chol(innovation_cov);
    if (chol.info() != Eigen::Success) {
      throw NumericalError("kalman_loglik: innovation covariance is not positive definite at time index " +
                           std::to_string(t));
    }
    const Eigen::VectorXd whitened = chol.matrixL().solve(innovation);
    const double log_det = 2.0 * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
    loglik += -0.5 * (static_cast<double>(ny) * kLog2Pi + log_det + whitened.squaredNorm());

    // Joseph-form measurement update.
    const Eigen::MatrixXd gain = chol.solve(form.C * cov).transpose();
    mean += gain * innovation;
    const Eigen::MatrixXd factor = identity - gain * form.C;
    cov = factor * cov * factor.transpose() + gain * noise * gain.transpose();
    cov = 0.5 * (cov + cov.transpose());

    if (t + 1 < data.horizon()) {
      const auto u = data.input(t);
      const Eigen::Map<const Eigen::VectorXd> input(u.data(), static_cast<Eigen::Index>(u.size()));
      mean = form.A * mean + form.B * input;
      cov = form.A * cov * form.A.transpose() + form.Q;
      cov = 0.5 * (cov + cov.transpose());
    }
  }
  return loglik;
}

GridAxis GridAxis::linspace(double lower, double upper, std::size_t count) {
  if (count == 0) {
    throw std::invalid_argument("grid axis needs at least one point");
  }
  GridAxis axis;
  axis.points.resize(count);
  if (count == 1) {
    axis.points[0] = 0.5 * (lower + upper);
    return axis;
  }
  for (std::size_t i = 0; i < count; ++i) {
    axis.points[i] = lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return axis;
}

std::vector<double> GridPosterior::node(std::size_t flat) const {
  std::vector<double> theta(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    const std::size_t n = axes[a].points.size();
    theta[a] = axes[a].points[flat % n];
    flat /= n;
  }
  return theta;
}

std::vector<double> GridPosterior::marginal(std::size_t axis) const {
  std::vector<double> result(axes.at(axis).points.size(), 0.0);
  std::size_t stride = 1;
  for (std::size_t a = axis + 1; a < axes.size(); ++a) {
    stride *= axes[a].points.size();
  }
  const std::size_t n = result.size();
  for (std::size_t flat = 0; flat < masses.size(); ++flat) {
    result[(flat / stride) % n] += masses[flat];
  }
  return result;
}

std::vector<double> GridPosterior::mean() const {
  std::vector<double> result(axes.size(), 0.0);
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const auto m = marginal(a);
    for (std::size_t i = 0; i < m.size(); ++i) {
      result[a] += m[i] * axes[a].points[i];
    }
  }
  return result;
}

std::vector<double> GridPosterior::stddev() const {
  const auto mu = mean();
  std::vector<double> result(axes.size(), 0.0);
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const auto m = marginal(a);
    double var = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double d = axes[a].points[i] - mu[a];
      var += m[i] * d * d;
    }
    result[a] = std::sqrt(var);
  }
  return result;
}

GridPosterior grid_posterior(const ModelSpec& model, double lambda, const Dataset& data, std::vector<GridAxis> axes,
                             int threads) {
  if (axes.empty() || axes.size() > 2 || axes.size() != model.param_dim) {
    throw std::invalid_argument("grid_posterior: needs one axis per parameter and at most two parameters");
  }
  std::size_t total = 1;
  for (const auto& axis : axes) {
    if (axis.points.empty()) {
      throw std::invalid_argument("grid_posterior: empty axis");
    }
    total *= axis.points.size();
  }

  GridPosterior grid;
  grid.axes = std::move(axes);
  grid.log_masses.assign(total, kNegInf);
  parallel_for(total, threads, [&](std::size_t flat) {
    const auto theta = grid.node(flat);
    const double log_prior = model.prior.log_density(theta);
    if (!std::isfinite(log_prior)) {
      return;
    }
    grid.log_masses[flat] = log_prior + kalman_loglik(model, theta, lambda, data);
  });

  const double log_norm = logsumexp(grid.log_masses);
  if (!std::isfinite(log_norm)) {
    throw NumericalError("grid_posterior: every grid node has zero posterior mass");
  }
  grid.masses.resize(total);
  double sum = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    grid.masses[i] = std::exp(grid.log_masses[i] - log_norm);
    sum += grid.masses[i];
  }
  for (auto& m : grid.masses) {
    m /= sum;
  }
  return grid;
}

std::vector<GridAxis> default_grid_axes(const ModelSpec& model, std::size_t points_per_axis) {
  const auto& box = model.prior.box();
  if (!box) {
    throw std::invalid_argument("default_grid_axes: prior of model '" + model.name + "' has no support box");
  }
  std::vector<GridAxis> axes;
  for (std::size_t i = 0; i < model.param_dim; ++i) {
    axes.push_back(GridAxis::linspace(box->first[i], box->second[i], points_per_axis));
  }
  return axes;
}

void write_grid_csv(const GridPosterior& grid, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t a = 0; a < grid.axes.size(); ++a) {
    out << "theta" << a + 1 << ',';
  }
  out << "mass\n";
  for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
    for (const double v : grid.node(flat)) {
      out << v << ',';
    }
    out << grid.masses[flat] << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace tsmc
