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

#include "tsmc/commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <iomanip>
#include <random>
#include <sstream>

#include "tsmc/errors.hpp"
#include "tsmc/exact_inference.hpp"
#include "tsmc/io.hpp"
#include "tsmc/math.hpp"
#include "tsmc/parallel.hpp"

namespace tsmc {

RunConfig apply_options(RunConfig cfg, const CommandOptions& options, std::ostream& log) {
  if (options.seed) {
    cfg.sampler.seed = *options.seed;
    cfg.seed_given = true;
  }
  if (!cfg.seed_given) {
    std::random_device device;
    cfg.sampler.seed = (static_cast<std::uint64_t>(device()) << 32U) ^ device();
    cfg.seed_given = true;
    log << "seed: " << cfg.sampler.seed << " (auto-generated)\n";
  }
  if (options.out) {
    cfg.out = *options.out;
  }
  if (options.bins) {
    cfg.bins = *options.bins;
  }
  cfg.sampler.threads = resolve_threads(options.threads);
  cfg.validate();
  return cfg;
}

Dataset load_or_simulate(const RunConfig& cfg, const ModelSpec& model) {
  if (cfg.data == "simulate") {
    return add_observation_noise(simulate(model, cfg.theta_true, cfg.horizon, cfg.data_seed), cfg.obs_noise,
                                 cfg.data_seed);
  }
  std::optional<Dataset> loaded;
  try {
    loaded.emplace(read_dataset_csv(cfg.data));
  } catch (const IoError& e) {
    throw ConfigError(std::string("field 'data': ") + e.what());
  }
  Dataset data = std::move(*loaded);
  if (data.input_dim() != model.input_dim || data.obs_dim() != model.obs_dim) {
    throw ConfigError("field 'data': dataset dimensions do not match model '" + model.name + "'");
  }
  return data;
}

std::vector<ScalingRow> run_scaling_study(const RunConfig& cfg, const ModelSpec& model, std::ostream& log) {
  std::vector<ScalingRow> rows;
  SamplerConfig sampler = cfg.sampler;
  sampler.on_step = nullptr;
  for (const std::size_t horizon : cfg.scaling_horizons) {
    const Dataset data =
        add_observation_noise(simulate(model, cfg.theta_true, horizon, cfg.data_seed), cfg.obs_noise, cfg.data_seed);
    const RunOutput output = run_tempered_smc(model, data, sampler);
    const bool reached = (output.termination.reasons & kTargetReached) != 0U;
    rows.push_back({horizon, output.state.p, reached});
    log << "T=" << horizon << " P=" << output.state.p << " (" << output.termination.describe() << ", "
        << std::fixed << std::setprecision(1) << output.wall_seconds << " s)\n"
        << std::defaultfloat;
  }
  return rows;
}

void write_scaling_csv(std::span<const ScalingRow> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "T,P\n";
  for (const auto& row : rows) {
    out << row.horizon << ',' << row.steps << '\n';
  }
  write_file_atomic(path, out.str());
}

namespace {

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments(std::span<const double> values) {
  Moments m;
  for (const double v : values) {
    m.mean += v;
  }
  m.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) {
    ss += (v - m.mean) * (v - m.mean);
  }
  m.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return m;
}

std::string format(double value, int precision = 6) {
  std::ostringstream out;
  out << std::setprecision(precision) << value;
  return out.str();
}

CheckResult check_unbiasedness(const RunConfig& cfg, const ModelSpec& model, const Dataset& data) {
  const double exact = kalman_loglik(model, cfg.theta_true, cfg.check_lambda, data);
  std::vector<double> ratios(cfg.check_runs);
  parallel_for(cfg.check_runs, cfg.sampler.threads, [&](std::size_t i) {
    auto rng = Rng::stream(cfg.sampler.seed, Stream::kCheck, {0, i});
    const PfResult result =
        run_bpf(model, cfg.theta_true, cfg.check_lambda, data, cfg.sampler.state_particles, rng);
    ratios[i] = std::exp(result.log_z - exact);
  });
  const Moments m = moments(ratios);
  const double se = m.stddev / std::sqrt(static_cast<double>(ratios.size()));
  const double z = std::abs(m.mean - 1.0) / se;
  return {"pf-unbiasedness", z <= 3.0,
          "mean z/p(y) = " + format(m.mean) + ", SE = " + format(se) + ", |dev|/SE = " + format(z, 3) +
              " over " + std::to_string(ratios.size()) + " runs (N_x=" +
              std::to_string(cfg.sampler.state_particles) + ", T=" + std::to_string(data.horizon()) + ")"};
}

CheckResult check_ess_solver(const RunConfig& cfg, const ModelSpec& model, const Dataset& data) {
  const auto& tcfg = cfg.sampler.tempering;
  const std::size_t count = cfg.sampler.population;
  const double lambda_prev = tcfg.lambda_0;
  std::vector<std::shared_ptr<const TrajectoryBundle>> owned(count);
  parallel_for(count, cfg.sampler.threads, [&](std::size_t j) {
    auto rng = Rng::stream(cfg.sampler.seed, Stream::kCheck, {1, j});
    const ParamVector theta = model.prior.sample(rng);
    owned[j] = run_bpf(model, theta, lambda_prev, data, cfg.sampler.state_particles, rng).bundle;
  });
  std::vector<const TrajectoryBundle*> bundles;
  for (const auto& b : owned) {
    bundles.push_back(b.get());
  }
  const LambdaSolution solution = solve_lambda(bundles, lambda_prev, tcfg, cfg.sampler.threads);

  std::vector<double> increments(count);
  for (std::size_t j = 0; j < count; ++j) {
    increments[j] = incremental_logweight(*bundles[j], solution.lambda, lambda_prev);
  }
  const double reevaluated = ess(increments);
  const double target = tcfg.alpha * static_cast<double>(count);
  const double rel = std::abs(reevaluated - target) / target;
  bool passed = reevaluated == solution.ess;
  switch (solution.kind) {
    case LambdaSolution::Kind::kCrossing:
      passed = passed && rel <= tcfg.ess_tol;
      break;
    case LambdaSolution::Kind::kTerminal:
      passed = passed && reevaluated >= target;
      break;
    case LambdaSolution::Kind::kMaxIter:
      passed = false;
      break;
    case LambdaSolution::Kind::kFallback:
      break;
  }
  return {"ess-solver", passed,
          "lambda " + format(lambda_prev) + " -> " + format(solution.lambda, 10) + " (" + to_string(solution.kind) +
              "), ESS re-evaluated = " + format(reevaluated, 10) + ", target = " + format(target) +
              ", relative error = " + format(rel, 3)};
}

/// Total variation between two histograms over the same bins.
double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    tv += std::abs(p[i] - q[i]);
  }
  return 0.5 * tv;
}

CheckResult check_grid_posterior(const RunConfig& cfg, const ModelSpec& model, const Dataset& data) {
  const double lambda = cfg.check_lambda;
  const int threads = cfg.sampler.threads;
  const GridPosterior coarse = grid_posterior(model, lambda, data, default_grid_axes(model, 60), threads);
  const auto coarse_mean = coarse.mean();
  auto coarse_sd = coarse.stddev();
  const auto& box = model.prior.box();

  std::vector<GridAxis> axes;
  std::vector<std::pair<double, double>> ranges;
  const double cell = box ? (box->second[0] - box->first[0]) / 59.0 : 0.0;
  for (std::size_t a = 0; a < model.param_dim; ++a) {
    coarse_sd[a] = std::max(coarse_sd[a], 0.25 * cell);
    double lo = coarse_mean[a] - 6.0 * coarse_sd[a];
    double hi = coarse_mean[a] + 6.0 * coarse_sd[a];
    if (box) {
      lo = std::max(lo, box->first[a]);
      hi = std::min(hi, box->second[a]);
    }
    axes.push_back(GridAxis::linspace(lo, hi, 150));
    ranges.emplace_back(lo, hi);
  }
  const GridPosterior fine = grid_posterior(model, lambda, data, axes, threads);
  const auto fine_sd = fine.stddev();

  std::vector<double> scale(model.param_dim);
  for (std::size_t a = 0; a < model.param_dim; ++a) {
    scale[a] = 2.38 / std::sqrt(static_cast<double>(model.param_dim)) * fine_sd[a];
  }
  const MhChain chain = run_exact_mh(model, data, lambda, cfg.check_chain, RandomWalk::diagonal(scale),
                                     fine.mean(), cfg.sampler.seed);

  constexpr std::size_t kBins = 30;
  double worst = 0.0;
  std::string detail;
  for (std::size_t a = 0; a < model.param_dim; ++a) {
    const auto [lo, hi] = ranges[a];
    const double width = (hi - lo) / static_cast<double>(kBins);
    auto bin_of = [&](double v) {
      return std::min(kBins - 1, static_cast<std::size_t>(std::max(0.0, std::floor((v - lo) / width))));
    };
    std::vector<double> grid_hist(kBins, 0.0);
    const auto marginal = fine.marginal(a);
    for (std::size_t i = 0; i < marginal.size(); ++i) {
      grid_hist[bin_of(fine.axes[a].points[i])] += marginal[i];
    }
    std::vector<double> chain_hist(kBins, 0.0);
    for (const auto& theta : chain.samples) {
      chain_hist[bin_of(theta[a])] += 1.0 / static_cast<double>(chain.samples.size());
    }
    const double tv = total_variation(grid_hist, chain_hist);
    worst = std::max(worst, tv);
    detail += "TV(theta_" + std::to_string(a + 1) + ") = " + format(tv, 3) + "; ";
  }
  detail += "chain length " + std::to_string(chain.samples.size()) + ", acceptance " +
            format(chain.acceptance_rate(), 3);
  return {"mh-vs-grid", worst <= 0.1, detail};
}

CheckResult check_cache_coherence(const RunConfig& cfg, const ModelSpec& model, const Dataset& data,
                                  bool corrupt_cache) {
  SamplerConfig small = cfg.sampler;
  small.population = std::min<std::size_t>(cfg.sampler.population, 20);
  small.warm_moves = 2;
  small.sweeps = 1;
  Population population = init_population(model, data, small);
  std::vector<const TrajectoryBundle*> bundles;
  for (const auto& particle : population.particles) {
    bundles.push_back(particle.bundle.get());
  }
  const LambdaSolution solution = solve_lambda(bundles, population.lambda, small.tempering, small.threads);
  const auto increments = incremental_logweights(bundles, solution.lambda, population.lambda, small.threads);
  auto rng = Rng::stream(small.seed, Stream::kCheck, {3});
  population = resample_population(population, increments, solution.lambda, model.prior, rng);
  rejuvenate(population, model, data, RandomWalk::for_population(small.proposal, {}), small);
  if (corrupt_cache) {
    population.lambda *= 1.0 + 1e-6;
  }
  const bool coherent = cache_coherent(population);
  return {"cache-coherence", coherent,
          std::string(coherent ? "every" : "not every") + " cached log_z matches the bundle at lambda " +
              format(population.lambda, 10) + (corrupt_cache ? " (corrupted on purpose)" : "")};
}

int report_exception(std::ostream& err, const std::exception& e, int code) {
  err << "error: " << e.what() << '\n';
  return code;
}

/// Runs `body` and maps library exceptions onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    return report_exception(err, e, kExitConfigError);
  } catch (const IoError& e) {
    return report_exception(err, e, kExitIoError);
  } catch (const NumericalError& e) {
    return report_exception(err, e, kExitNumericalFailure);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_exception(err, e, kExitIoError);
  } catch (const std::invalid_argument& e) {
    return report_exception(err, e, kExitConfigError);
  } catch (const std::exception& e) {
    return report_exception(err, e, kExitNumericalFailure);
  }
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
}

RunConfig prepare(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out) {
  RunConfig cfg = apply_options(load_config(config), options, out);
  cfg.sampler.on_step = [&out](const StepRecord& step) {
    out << "step " << step.p << ": lambda " << step.lambda << ", ess " << step.ess << ", acceptance "
        << step.accept_rate << std::endl;
  };
  return cfg;
}

std::string metadata_text(const RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& results) {
  std::ostringstream text;
  text << "# run metadata; feed back with --config to reproduce\n" << echo_config(cfg);
  for (const auto& [key, value] : results) {
    text << "result." << key << " = " << value << '\n';
  }
  return text.str();
}

void write_run_artifacts(const RunConfig& cfg, const ModelSpec& model, const RunOutput& output,
                         std::vector<std::pair<std::string, std::string>> results) {
  write_samples_csv(output.samples, cfg.out / "samples.csv");
  write_schedule_csv(output.schedule(), cfg.out / "schedule.csv");
  write_histograms_csv(output, model.prior, cfg.bins, cfg.out / "histograms.csv");
  results.emplace_back("termination_reason", output.termination.describe());
  results.emplace_back("steps", std::to_string(output.state.p));
  results.emplace_back("final_lambda", format(output.state.lambda, 17));
  results.emplace_back("wall_time_s", format(output.wall_seconds, 6));
  write_file_atomic(cfg.out / "metadata.txt", metadata_text(cfg, results));
}

int run_checks_and_report(const RunConfig& cfg, const ModelSpec& model, bool corrupt_cache, std::ostream& out) {
  const auto results = run_checks(cfg, model, corrupt_cache);
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? kExitOk : kExitNumericalFailure;
}

int run_scaling_and_write(const RunConfig& cfg, const ModelSpec& model, std::ostream& out) {
  ensure_directory(cfg.out);
  const auto rows = run_scaling_study(cfg, model, out);
  write_scaling_csv(rows, cfg.out / "scaling.csv");
  write_file_atomic(cfg.out / "metadata.txt", metadata_text(cfg, {}));
  return kExitOk;
}

}  // namespace

std::vector<CheckResult> run_checks(const RunConfig& cfg, const ModelSpec& model, bool corrupt_cache) {
  if (!model.is_linear_gaussian()) {
    throw ConfigError("field 'model': the check suite needs a linear-Gaussian model");
  }
  const Dataset data = simulate(model, cfg.theta_true, cfg.horizon, cfg.data_seed);
  return {check_unbiasedness(cfg, model, data), check_ess_solver(cfg, model, data),
          check_grid_posterior(cfg, model, data), check_cache_coherence(cfg, model, data, corrupt_cache)};
}

void write_histograms_csv(const RunOutput& output, const Prior& prior, std::size_t bins,
                          const std::filesystem::path& path) {
  if (bins == 0) {
    throw std::invalid_argument("histograms need at least one bin");
  }
  const std::size_t dim = output.samples.empty() ? 0 : output.samples.front().size();
  std::vector<double> lower(dim, std::numeric_limits<double>::infinity());
  std::vector<double> upper(dim, -std::numeric_limits<double>::infinity());
  if (const auto& box = prior.box()) {
    lower = box->first;
    upper = box->second;
  } else {
    for (const auto& step : output.steps) {
      for (const auto& theta : step.thetas) {
        for (std::size_t a = 0; a < dim; ++a) {
          lower[a] = std::min(lower[a], theta[a]);
          upper[a] = std::max(upper[a], theta[a]);
        }
      }
    }
  }
  std::ostringstream out;
  out << std::setprecision(17) << "p,lambda,param,bin_lo,bin_hi,density\n";
  for (const auto& step : output.steps) {
    for (std::size_t a = 0; a < dim; ++a) {
      const double width = upper[a] > lower[a] ? (upper[a] - lower[a]) / static_cast<double>(bins) : 1.0;
      std::vector<double> counts(bins, 0.0);
      for (const auto& theta : step.thetas) {
        const double pos = std::floor((theta[a] - lower[a]) / width);
        counts[static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)))] += 1.0;
      }
      for (std::size_t b = 0; b < bins; ++b) {
        const double lo = lower[a] + width * static_cast<double>(b);
        out << step.p << ',' << step.lambda << ',' << a + 1 << ',' << lo << ',' << lo + width << ','
            << counts[b] / (static_cast<double>(step.thetas.size()) * width) << '\n';
      }
    }
  }
  write_file_atomic(path, out.str());
}

int cmd_run(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = prepare(config, options, out);
    const ModelSpec model = resolve_model(cfg);
    if (cfg.mode == RunMode::kScalingStudy) {
      return run_scaling_and_write(cfg, model, out);
    }
    if (cfg.mode == RunMode::kCheck) {
      return run_checks_and_report(cfg, model, options.corrupt_cache, out);
    }
    const Dataset data = load_or_simulate(cfg, model);
    ensure_directory(cfg.out);
    write_dataset_csv(data, cfg.out / "data.csv");

    if (cfg.mode == RunMode::kPmh) {
      const MhChain chain = run_pmh(model, data, cfg.pmh_lambda, cfg.pmh_length,
                                    RandomWalk::diagonal(cfg.sampler.proposal.scale), cfg.pmh_init,
                                    cfg.sampler.state_particles, cfg.sampler.seed);
      write_samples_csv(chain.samples, cfg.out / "samples.csv");
      write_file_atomic(cfg.out / "metadata.txt",
                        metadata_text(cfg, {{"acceptance_rate", format(chain.acceptance_rate(), 17)},
                                            {"accepted", std::to_string(chain.accepted)}}));
      out << "pmh: " << chain.samples.size() << " samples, acceptance rate " << chain.acceptance_rate() << '\n';
      return kExitOk;
    }

    const bool exact = cfg.mode == RunMode::kTemperedExact;
    RunOutput output;
    try {
      output = exact ? run_exact_tempered_smc(model, data, cfg.sampler) : run_tempered_smc(model, data, cfg.sampler);
    } catch (const RunFailure& failure) {
      write_run_artifacts(cfg, model, failure.partial(), {{"status", "numerical-failure"}, {"error", failure.what()}});
      throw;
    }
    write_run_artifacts(cfg, model, output, {{"status", "ok"}});
    if (cfg.grid_points > 0) {
      const auto grid = grid_posterior(model, output.state.lambda, data, default_grid_axes(model, cfg.grid_points),
                                       cfg.sampler.threads);
      write_grid_csv(grid, cfg.out / "grid.csv");
    }
    out << to_string(cfg.mode) << ": " << output.state.p << " tempering steps, final lambda "
        << output.state.lambda << ", terminated by " << output.termination.describe() << '\n';
    return kExitOk;
  });
}

int cmd_scaling_study(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
                      std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = prepare(config, options, out);
    cfg.mode = RunMode::kScalingStudy;
    cfg.validate();
    return run_scaling_and_write(cfg, resolve_model(cfg), out);
  });
}

int cmd_check(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = prepare(config, options, out);
    cfg.mode = RunMode::kCheck;
    cfg.validate();
    return run_checks_and_report(cfg, resolve_model(cfg), options.corrupt_cache, out);
  });
}

int cmd_simulate(const std::filesystem::path& config, const CommandOptions& options, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = prepare(config, options, out);
    if (cfg.data != "simulate") {
      throw ConfigError("field 'data': simulate needs data = simulate");
    }
    const ModelSpec model = resolve_model(cfg);
    const Dataset data = load_or_simulate(cfg, model);
    ensure_directory(cfg.out);
    write_dataset_csv(data, cfg.out / "data.csv");
    out << "wrote " << data.horizon() << " rows to " << (cfg.out / "data.csv").string() << '\n';
    return kExitOk;
  });
}

}  // namespace tsmc
