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

#ifndef TSMC_RUN_CONFIG_HPP
#define TSMC_RUN_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsmc/smc_sampler.hpp"

namespace tsmc {

enum class RunMode { kTemperedPf, kTemperedExact, kPmh, kScalingStudy, kCheck };

std::string to_string(RunMode mode);

/// Everything needed to reproduce a run. Parsed from a flat `key = value`
/// document; `#` starts a comment.
struct RunConfig {
  std::string model = "linear";
  RunMode mode = RunMode::kTemperedPf;

  std::string data = "simulate";  ///< "simulate" or a dataset CSV path
  std::size_t horizon = 200;      ///< T for simulated data
  std::uint64_t data_seed = 1;
  double obs_noise = 0.0;           ///< variance of noise added to simulated observations
  std::vector<double> theta_true;  ///< defaults per built-in model
  std::vector<double> prior_lower;  ///< optional uniform-box override
  std::vector<double> prior_upper;

  SamplerConfig sampler;
  bool seed_given = false;

  std::filesystem::path out = "out";
  std::size_t bins = 30;
  std::size_t grid_points = 0;  ///< >0 writes the exact grid posterior (linear models)

  double pmh_lambda = 0.01;
  std::size_t pmh_length = 10000;
  std::vector<double> pmh_init;  ///< defaults to theta_true

  std::vector<std::size_t> scaling_horizons;

  double check_lambda = 1.0;
  std::size_t check_runs = 1000;
  std::size_t check_chain = 50000;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses config text; errors name the source and line. Keys starting with
/// `result.` are ignored so run metadata can be fed back as a config.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// `key = value` lines that parse back to an identical configuration.
std::string echo_config(const RunConfig& cfg);

/// The configured model, with theta_true defaults and prior overrides applied.
ModelSpec resolve_model(const RunConfig& cfg);

}  // namespace tsmc

#endif  // TSMC_RUN_CONFIG_HPP
