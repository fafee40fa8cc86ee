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

#ifndef TSMC_COMMANDS_HPP
#define TSMC_COMMANDS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tsmc/run_config.hpp"

namespace tsmc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericalFailure = 3;
inline constexpr int kExitIoError = 4;

/// Command-line overrides of the config file.
struct CommandOptions {
  std::optional<std::uint64_t> seed;
  int threads = 0;  ///< 0 = all cores
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> bins;
  bool corrupt_cache = false;  ///< check-suite negative control
};

/// Applies overrides; picks and reports a fresh seed when none was given.
RunConfig apply_options(RunConfig cfg, const CommandOptions& options, std::ostream& log);

/// Reads the configured dataset CSV, or simulates one from theta_true.
Dataset load_or_simulate(const RunConfig& cfg, const ModelSpec& model);

struct ScalingRow {
  std::size_t horizon = 0;
  std::size_t steps = 0;  ///< P: tempering steps taken
  bool reached_target = false;
};

/// For each configured horizon: simulate data, run the tempered sampler and
/// count the steps needed to reach lambda_target.
std::vector<ScalingRow> run_scaling_study(const RunConfig& cfg, const ModelSpec& model, std::ostream& log);

void write_scaling_csv(std::span<const ScalingRow> rows, const std::filesystem::path& path);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Oracle checks on a linear-Gaussian model: particle-filter unbiasedness,
/// ESS-solver re-evaluation, exact-MH chain against the grid posterior and
/// cache coherence of a tempering step.
std::vector<CheckResult> run_checks(const RunConfig& cfg, const ModelSpec& model, bool corrupt_cache = false);

/// Pre-binned marginal histograms of every recorded population:
/// CSV `p,lambda,param,bin_lo,bin_hi,density`.
void write_histograms_csv(const RunOutput& output, const Prior& prior, std::size_t bins,
                          const std::filesystem::path& path);

int cmd_run(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
            std::ostream& err);
int cmd_scaling_study(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
                      std::ostream& err);
int cmd_check(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
              std::ostream& err);
int cmd_simulate(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
                 std::ostream& err);

}  // namespace tsmc

#endif  // TSMC_COMMANDS_HPP
