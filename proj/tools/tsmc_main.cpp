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

#include <CLI11.hpp>

#include <iostream>

#include "tsmc/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"tsmc: tempered sequential Monte Carlo for state-space model parameters"};
  app.require_subcommand(1);

  std::string config;
  tsmc::CommandOptions options;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t bins = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Key = value run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--threads", options.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out, "Output directory (overrides the config)");
  };

  auto* run = app.add_subcommand("run", "Run the configured mode and write artifacts");
  add_common(run);
  run->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);
  auto* scaling = app.add_subcommand("scaling-study", "Count tempering steps against the horizon");
  add_common(scaling);
  auto* check = app.add_subcommand("check", "Run the oracle checks on a linear-Gaussian model");
  add_common(check);
  check->add_flag("--corrupt-cache", options.corrupt_cache)->group("");
  auto* simulate = app.add_subcommand("simulate", "Write a simulated dataset");
  add_common(simulate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tsmc::kExitConfigError;
  }

  auto* active = app.get_subcommands().front();
  if (active->count("--seed") > 0) {
    options.seed = seed;
  }
  if (active->count("--out") > 0) {
    options.out = out;
  }
  if (active == run && run->count("--bins") > 0) {
    options.bins = bins;
  }

  if (active == run) {
    return tsmc::cmd_run(config, options, std::cout, std::cerr);
  }
  if (active == scaling) {
    return tsmc::cmd_scaling_study(config, options, std::cout, std::cerr);
  }
  if (active == check) {
    return tsmc::cmd_check(config, options, std::cout, std::cerr);
  }
  return tsmc::cmd_simulate(config, options, std::cout, std::cerr);
}
