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

#include "tsmc/model.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "tsmc/errors.hpp"
#include "tsmc/io.hpp"
#include "tsmc/math.hpp"

namespace tsmc {

Prior::Prior(std::size_t dim, LogDensityFn log_density, SamplerFn sampler)
    : dim_{dim}, log_density_{std::move(log_density)}, sampler_{std::move(sampler)} {
  if (dim_ == 0 || !log_density_ || !sampler_) {
    throw std::invalid_argument("prior needs a positive dimension, a log-density and a sampler");
  }
}

Prior Prior::uniform_box(std::vector<double> lower, std::vector<double> upper) {
  if (lower.size() != upper.size() || lower.empty()) {
    throw std::invalid_argument("uniform prior bounds must be non-empty and of equal length");
  }
  double log_volume = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i]) || !std::isfinite(lower[i]) || !std::isfinite(upper[i])) {
      throw std::invalid_argument("uniform prior needs finite bounds with lower < upper");
    }
    log_volume += std::log(upper[i] - lower[i]);
  }
  auto log_density = [lower, upper, log_volume](std::span<const double> theta) {
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(theta[i] >= lower[i] && theta[i] <= upper[i])) {
        return kNegInf;
      }
    }
    return -log_volume;
  };
  auto sampler = [lower, upper](Rng& rng) {
    ParamVector theta(lower.size());
    for (std::size_t i = 0; i < lower.size(); ++i) {
      theta[i] = lower[i] + (upper[i] - lower[i]) * rng.uniform();
    }
    return theta;
  };
  Prior prior{lower.size(), std::move(log_density), std::move(sampler)};
  prior.box_ = std::make_pair(std::move(lower), std::move(upper));
  return prior;
}

Prior Prior::gaussian(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != stddev.size() || mean.empty()) {
    throw std::invalid_argument("gaussian prior moments must be non-empty and of equal length");
  }
  for (const double s : stddev) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("gaussian prior standard deviations must be positive");
    }
  }
  auto log_density = [mean, stddev](std::span<const double> theta) {
    double value = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double z = (theta[i] - mean[i]) / stddev[i];
      value += -0.5 * (kLog2Pi + z * z) - std::log(stddev[i]);
    }
    return value;
  };
  auto sampler = [mean, stddev](Rng& rng) {
    ParamVector theta(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
      theta[i] = mean[i] + stddev[i] * rng.normal();
    }
    return theta;
  };
  return Prior{mean.size(), std::move(log_density), std::move(sampler)};
}

void ModelSpec::validate() const {
  if (state_dim == 0 || obs_dim == 0 || param_dim == 0) {
    throw std::invalid_argument("model '" + name + "': state, observation and parameter dimensions must be >= 1");
  }
  if (!transition || !observe || !init_state) {
    throw std::invalid_argument("model '" + name + "': transition, observe and init_state are required");
  }
  if (prior.dim() != param_dim) {
    throw std::invalid_argument("model '" + name + "': prior dimension does not match parameter dimension");
  }
}

Dataset::Dataset(std::size_t input_dim, std::size_t obs_dim, std::vector<double> inputs,
                 std::vector<double> observations)
    : input_dim_{input_dim}, obs_dim_{obs_dim}, inputs_{std::move(inputs)}, observations_{std::move(observations)} {
  if (obs_dim_ == 0) {
    throw std::invalid_argument("dataset observation dimension must be >= 1");
  }
  if (observations_.size() % obs_dim_ != 0) {
    throw std::invalid_argument("observation buffer is not a whole number of rows");
  }
  horizon_ = observations_.size() / obs_dim_;
  if (horizon_ == 0) {
    throw std::invalid_argument("dataset needs at least one time step");
  }
  if (inputs_.size() != horizon_ * input_dim_) {
    throw std::invalid_argument("inputs and observations must have the same number of time steps");
  }
  for (const double v : inputs_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("dataset inputs must be finite");
    }
  }
  for (const double v : observations_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("dataset observations must be finite");
    }
  }
}

std::vector<double> white_noise_inputs(std::size_t horizon, std::size_t input_dim, Rng& rng) {
  std::vector<double> inputs(horizon * input_dim);
  for (auto& v : inputs) {
    v = rng.normal();
  }
  return inputs;
}

Dataset simulate(const ModelSpec& model, std::span<const double> theta, std::size_t horizon, std::uint64_t seed,
                 const InputPolicy& input_policy) {
  model.validate();
  if (horizon == 0) {
    throw std::invalid_argument("simulate: horizon must be >= 1");
  }
  if (theta.size() != model.param_dim) {
    throw std::invalid_argument("simulate: parameter vector has the wrong length");
  }
  if (!std::isfinite(model.prior.log_density(theta))) {
    throw std::invalid_argument("simulate: parameter outside the prior support");
  }
  auto input_rng = Rng::stream(seed, Stream::kSimulateInputs);
  auto state_rng = Rng::stream(seed, Stream::kSimulateStates);

  std::vector<double> inputs = input_policy(horizon, model.input_dim, input_rng);
  if (inputs.size() != horizon * model.input_dim) {
    throw std::invalid_argument("simulate: input policy returned the wrong number of entries");
  }

  const std::size_t dx = model.state_dim;
  const std::size_t dy = model.obs_dim;
  const std::size_t du = model.input_dim;
  std::vector<double> states(horizon * dx);
  std::vector<double> observations(horizon * dy);

  auto check_state = [&](std::size_t t) {
    for (std::size_t k = 0; k < dx; ++k) {
      if (!std::isfinite(states[t * dx + k])) {
        throw SimulationDivergence(t, "simulation diverged: non-finite state at time index " + std::to_string(t));
      }
    }
  };

  model.init_state(theta, state_rng, std::span<double>{states.data(), dx});
  check_state(0);
  for (std::size_t t = 0; t < horizon; ++t) {
    if (t > 0) {
      model.transition(theta, std::span<const double>{states.data() + (t - 1) * dx, dx},
                       std::span<const double>{inputs.data() + (t - 1) * du, du}, state_rng,
                       std::span<double>{states.data() + t * dx, dx});
      check_state(t);
    }
    model.observe(theta, std::span<const double>{states.data() + t * dx, dx},
                  std::span<double>{observations.data() + t * dy, dy});
    for (std::size_t k = 0; k < dy; ++k) {
      if (!std::isfinite(observations[t * dy + k])) {
        throw SimulationDivergence(t, "simulation diverged: non-finite observation at time index " + std::to_string(t));
      }
    }
  }

  Dataset data{du, dy, std::move(inputs), std::move(observations)};
  data.true_states = std::move(states);
  data.true_theta = ParamVector(theta.begin(), theta.end());
  return data;
}

Dataset add_observation_noise(const Dataset& data, double variance, std::uint64_t seed) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw std::invalid_argument("observation noise variance must be finite and >= 0");
  }
  if (variance == 0.0) {
    return data;
  }
  auto rng = Rng::stream(seed, Stream::kSimulateNoise);
  const double sd = std::sqrt(variance);
  std::vector<double> observations = data.observations();
  for (double& y : observations) {
    y += sd * rng.normal();
  }
  Dataset noisy(data.input_dim(), data.obs_dim(), data.inputs(), std::move(observations));
  noisy.true_states = data.true_states;
  noisy.true_theta = data.true_theta;
  return noisy;
}

double obs_logdensity(std::span<const double> y, std::span<const double> predicted, double lambda) {
  if (!(lambda > 0.0)) {
    throw std::domain_error("observation noise variance must be positive");
  }
  if (y.size() != predicted.size()) {
    throw std::invalid_argument("observation and prediction differ in dimension");
  }
  double squared = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double d = y[k] - predicted[k];
    squared += d * d;
  }
  return obs_logdensity_from_residual(squared, y.size(), lambda);
}

namespace {

void standard_normal_init(std::span<const double> /*theta*/, Rng& rng, std::span<double> x) {
  for (auto& v : x) {
    v = rng.normal();
  }
}

}  // namespace

ModelSpec make_linear_model() {
  ModelSpec model{
      .name = "linear",
      .state_dim = 2,
      .obs_dim = 1,
      .input_dim = 1,
      .param_dim = 2,
      .transition =
          [](std::span<const double> theta, std::span<const double> x, std::span<const double> u, Rng& rng,
             std::span<double> x_next) {
            const double v0 = rng.normal();
            const double v1 = rng.normal();
            x_next[0] = x[0] + theta[0] * x[1] + theta[1] * u[0] + v0;
            x_next[1] = 0.1 * x[1] + v1;
          },
      .observe = [](std::span<const double> /*theta*/, std::span<const double> x,
                    std::span<double> y) { y[0] = x[0]; },
      .init_state = standard_normal_init,
      .prior = Prior::uniform_box({-2.5, -2.5}, {2.5, 2.5}),
      .linear_form =
          [](std::span<const double> theta) {
            LinearGaussianForm form;
            form.A.resize(2, 2);
            form.A << 1.0, theta[0], 0.0, 0.1;
            form.B.resize(2, 1);
            form.B << theta[1], 0.0;
            form.C.resize(1, 2);
            form.C << 1.0, 0.0;
            form.Q = Eigen::MatrixXd::Identity(2, 2);
            form.mu1 = Eigen::VectorXd::Zero(2);
            form.P1 = Eigen::MatrixXd::Identity(2, 2);
            return form;
          },
  };
  return model;
}

ModelSpec make_atan_model() {
  ModelSpec model{
      .name = "atan",
      .state_dim = 1,
      .obs_dim = 1,
      .input_dim = 1,
      .param_dim = 2,
      .transition =
          [](std::span<const double> theta, std::span<const double> x, std::span<const double> u, Rng& rng,
             std::span<double> x_next) { x_next[0] = std::atan(x[0]) + theta[0] * u[0] + rng.normal(); },
      .observe = [](std::span<const double> theta, std::span<const double> x,
                    std::span<double> y) { y[0] = std::abs(x[0]) + theta[0] * theta[1]; },
      .init_state = standard_normal_init,
      .prior = Prior::uniform_box({-2.5, 0.0}, {2.5, 2.5}),
      .linear_form = {},
  };
  return model;
}

namespace {

std::map<std::string, std::function<ModelSpec()>>& registry() {
  static std::map<std::string, std::function<ModelSpec()>> models{
      {"linear", make_linear_model},
      {"atan", make_atan_model},
  };
  return models;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::optional<ModelSpec> find_model(const std::string& id) {
  const std::lock_guard lock{registry_mutex()};
  const auto it = registry().find(id);
  if (it == registry().end()) {
    return std::nullopt;
  }
  return it->second();
}

void register_model(const std::string& id, std::function<ModelSpec()> factory) {
  const std::lock_guard lock{registry_mutex()};
  registry()[id] = std::move(factory);
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << 't';
  for (std::size_t k = 0; k < data.input_dim(); ++k) {
    out << ",u_" << k + 1;
  }
  for (std::size_t k = 0; k < data.obs_dim(); ++k) {
    out << ",y_" << k + 1;
  }
  out << '\n';
  for (std::size_t t = 0; t < data.horizon(); ++t) {
    out << t + 1;
    for (const double v : data.input(t)) {
      out << ',' << v;
    }
    for (const double v : data.observation(t)) {
      out << ',' << v;
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in{line};
  while (std::getline(in, field, ',')) {
    fields.push_back(field);
  }
  return fields;
}

}  // namespace

Dataset read_dataset_csv(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::istringstream in{content};
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("dataset file '" + path.string() + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t") {
    throw IoError("dataset file '" + path.string() + "': header must start with 't'");
  }
  std::size_t du = 0;
  std::size_t dy = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& name = header[i];
    if (name.rfind("u_", 0) == 0 && dy == 0) {
      ++du;
    } else if (name.rfind("y_", 0) == 0) {
      ++dy;
    } else {
      throw IoError("dataset file '" + path.string() + "': unexpected column '" + name + "'");
    }
  }
  if (dy == 0) {
    throw IoError("dataset file '" + path.string() + "': no observation columns");
  }
  std::vector<double> inputs;
  std::vector<double> observations;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 1 + du + dy) {
      throw IoError("dataset file '" + path.string() + "': row " + std::to_string(row) + " has " +
                    std::to_string(fields.size()) + " fields, expected " + std::to_string(1 + du + dy));
    }
    try {
      for (std::size_t i = 0; i < du; ++i) {
        inputs.push_back(std::stod(fields[1 + i]));
      }
      for (std::size_t i = 0; i < dy; ++i) {
        observations.push_back(std::stod(fields[1 + du + i]));
      }
    } catch (const std::exception&) {
      throw IoError("dataset file '" + path.string() + "': unparsable number in row " + std::to_string(row));
    }
  }
  try {
    return Dataset{du, dy, std::move(inputs), std::move(observations)};
  } catch (const std::invalid_argument& e) {
    throw IoError("dataset file '" + path.string() + "': " + e.what());
  }
}

}  // namespace tsmc
