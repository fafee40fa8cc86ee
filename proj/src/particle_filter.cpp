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

#include "tsmc/particle_filter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "tsmc/errors.hpp"
#include "tsmc/io.hpp"
#include "tsmc/math.hpp"

namespace tsmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Index of the first cumulative entry exceeding `target`, skipping
/// zero-weight entries if rounding pushed the target to the very end.
std::size_t draw_from_cumulative(std::span<const double> cumulative, double target) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  std::size_t index = static_cast<std::size_t>(it - cumulative.begin());
  if (index >= cumulative.size()) {
    index = cumulative.size() - 1;
    while (index > 0 && cumulative[index] == cumulative[index - 1]) {
      --index;
    }
  }
  return index;
}

/// Exponentiates max-shifted log weights into a running sum. Returns the
/// total, or 0 when every weight is -inf.
double cumulative_weights(std::span<const double> log_weights, std::vector<double>& cumulative) {
  cumulative.resize(log_weights.size());
  double max_value = kNegInf;
  for (const double w : log_weights) {
    max_value = std::max(max_value, w);
  }
  if (max_value == kNegInf) {
    return 0.0;
  }
  if (!std::isfinite(max_value)) {
    throw std::invalid_argument("resampling weights must not be +inf or NaN");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    total += std::exp(log_weights[i] - max_value);
    cumulative[i] = total;
  }
  return total;
}

/// Vose alias table for O(1) i.i.d. categorical draws.
class AliasTable {
 public:
  explicit AliasTable(std::size_t size) : prob_(size), alias_(size), small_(size), large_(size) {}

  /// `weights` must have a positive sum.
  void build(std::span<const double> weights, double total) {
    const std::size_t n = weights.size();
    const double scale = static_cast<double>(n) / total;
    std::size_t n_small = 0;
    std::size_t n_large = 0;
    for (std::size_t i = 0; i < n; ++i) {
      prob_[i] = weights[i] * scale;
      if (prob_[i] < 1.0) {
        small_[n_small++] = static_cast<std::uint32_t>(i);
      } else {
        large_[n_large++] = static_cast<std::uint32_t>(i);
      }
    }
    while (n_small > 0 && n_large > 0) {
      const std::uint32_t s = small_[--n_small];
      const std::uint32_t l = large_[n_large - 1];
      alias_[s] = l;
      prob_[l] -= 1.0 - prob_[s];
      if (prob_[l] < 1.0) {
        --n_large;
        small_[n_small++] = l;
      }
    }
    // Leftovers are 1 up to rounding.
    while (n_large > 0) {
      const std::uint32_t l = large_[--n_large];
      prob_[l] = 1.0;
      alias_[l] = l;
    }
    while (n_small > 0) {
      const std::uint32_t s = small_[--n_small];
      if (prob_[s] > 0.0) {
        prob_[s] = 1.0;
      }
      alias_[s] = s;
    }
  }

  std::uint32_t draw(Rng& rng) const {
    const double u = rng.uniform() * static_cast<double>(prob_.size());
    const auto column = std::min(static_cast<std::size_t>(u), prob_.size() - 1);
    return (u - static_cast<double>(column)) < prob_[column] ? static_cast<std::uint32_t>(column) : alias_[column];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
  std::vector<std::uint32_t> small_;
  std::vector<std::uint32_t> large_;
};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
}

std::uint64_t get_u64(const std::string& in, std::size_t& offset) {
  if (offset + 8 > in.size()) {
    throw IoError("bundle dump is truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  offset += 8;
  return v;
}

}  // namespace

TrajectoryBundle::TrajectoryBundle(std::size_t particles, std::size_t horizon, std::size_t state_dim,
                                   std::size_t obs_dim, std::vector<double> states,
                                   std::vector<std::uint32_t> ancestors, std::vector<double> residuals,
                                   double lambda_gen, std::vector<double> gen_totals)
    : particles_{particles},
      horizon_{horizon},
      state_dim_{state_dim},
      obs_dim_{obs_dim},
      states_{std::move(states)},
      ancestors_{std::move(ancestors)},
      residuals_{std::move(residuals)},
      lambda_gen_{lambda_gen},
      gen_totals_{std::move(gen_totals)} {
  if (particles_ < 1 || horizon_ < 1 || state_dim_ < 1 || obs_dim_ < 1) {
    throw std::invalid_argument("trajectory bundle dimensions must be >= 1");
  }
  if (!(lambda_gen_ > 0.0)) {
    throw std::invalid_argument("trajectory bundle generating variance must be positive");
  }
  if (states_.size() != particles_ * horizon_ * state_dim_ || ancestors_.size() != particles_ * (horizon_ - 1) ||
      residuals_.size() != particles_ * horizon_) {
    throw std::invalid_argument("trajectory bundle buffers do not match its dimensions");
  }
  for (const auto a : ancestors_) {
    if (a >= particles_) {
      throw std::invalid_argument("ancestor index out of range");
    }
  }
  min_residual_.assign(horizon_, kInf);
  for (std::size_t t = 0; t < horizon_; ++t) {
    for (std::size_t n = 0; n < particles_; ++n) {
      double& r = residuals_[t * particles_ + n];
      if (std::isnan(r)) {
        r = kInf;
      }
      if (r < 0.0) {
        throw std::invalid_argument("residuals must be non-negative");
      }
      min_residual_[t] = std::min(min_residual_[t], r);
    }
    if (min_residual_[t] == kInf) {
      degenerate_ = true;
    }
  }
  for (std::size_t t = 0; t + 1 < horizon_; ++t) {
    for (std::size_t n = 0; n < particles_; ++n) {
      ancestor_residual_sum_ += residuals_[t * particles_ + ancestors_[t * particles_ + n]];
    }
  }
  if (degenerate_) {
    gen_totals_.clear();
  } else if (gen_totals_.size() != horizon_) {
    compute_log_totals(lambda_gen_, gen_totals_);
  }
}

TrajectoryBundle TrajectoryBundle::from_states(const ModelSpec& model, std::span<const double> theta,
                                               const Dataset& data, std::size_t particles,
                                               std::vector<double> states, std::vector<std::uint32_t> ancestors,
                                               double lambda_gen) {
  const std::size_t horizon = data.horizon();
  const std::size_t dx = model.state_dim;
  const std::size_t dy = model.obs_dim;
  if (states.size() != particles * horizon * dx) {
    throw std::invalid_argument("state buffer does not match particles x horizon x state_dim");
  }
  std::vector<double> residuals(particles * horizon);
  std::vector<double> predicted(dy);
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto y = data.observation(t);
    for (std::size_t n = 0; n < particles; ++n) {
      model.observe(theta, std::span<const double>{states.data() + (t * particles + n) * dx, dx}, predicted);
      double r = 0.0;
      for (std::size_t k = 0; k < dy; ++k) {
        const double d = y[k] - predicted[k];
        r += d * d;
      }
      residuals[t * particles + n] = r;
    }
  }
  return TrajectoryBundle{particles,         horizon, dx, dy, std::move(states), std::move(ancestors),
                          std::move(residuals), lambda_gen};
}

bool TrajectoryBundle::log_totals(double lambda, std::vector<double>& totals) const {
  if (degenerate_) {
    totals.assign(horizon_, kNegInf);
    return false;
  }
  if (lambda == lambda_gen_ && !gen_totals_.empty()) {
    totals = gen_totals_;
    return true;
  }
  compute_log_totals(lambda, totals);
  return true;
}

void TrajectoryBundle::compute_log_totals(double lambda, std::vector<double>& totals) const {
  totals.resize(horizon_);
  const double scale = 1.0 / (2.0 * lambda);
  for (std::size_t t = 0; t < horizon_; ++t) {
    const double* r = residuals_.data() + t * particles_;
    const double shift = min_residual_[t];
    double sum = 0.0;
    for (std::size_t n = 0; n < particles_; ++n) {
      sum += std::exp(-(r[n] - shift) * scale);
    }
    totals[t] = -shift * scale + std::log(sum);
  }
}

double TrajectoryBundle::loglik(double lambda) const {
  if (!(lambda > 0.0)) {
    throw std::domain_error("likelihood re-evaluation needs lambda > 0");
  }
  std::vector<double> totals;
  if (!log_totals(lambda, totals)) {
    return kNegInf;
  }
  const auto horizon = static_cast<double>(horizon_);
  double sum = 0.0;
  for (const double v : totals) {
    sum += v;
  }
  const double normalizer = -0.5 * static_cast<double>(obs_dim_) * (kLog2Pi + std::log(lambda));
  return horizon * normalizer + sum - horizon * std::log(static_cast<double>(particles_));
}

double TrajectoryBundle::weight_terms(double lambda) const {
  if (!(lambda > 0.0)) {
    throw std::domain_error("weight re-evaluation needs lambda > 0");
  }
  std::vector<double> totals;
  if (!log_totals(lambda, totals)) {
    return kNegInf;
  }
  // sum_t log sum_n w_t^n + sum_{t<T} sum_n [log w_t^{a(n,t)} - log sum_k w_t^k]
  // where log w = c - r / (2 lambda); the c terms of the ancestor factor cancel.
  double all_times = 0.0;
  double resampled_times = 0.0;
  for (std::size_t t = 0; t < horizon_; ++t) {
    all_times += totals[t];
    if (t + 1 < horizon_) {
      resampled_times += totals[t];
    }
  }
  const double normalizer = -0.5 * static_cast<double>(obs_dim_) * (kLog2Pi + std::log(lambda));
  return static_cast<double>(horizon_) * normalizer + all_times -
         static_cast<double>(particles_) * resampled_times - ancestor_residual_sum_ / (2.0 * lambda);
}

bool TrajectoryBundle::residuals_consistent(const ModelSpec& model, std::span<const double> theta,
                                            const Dataset& data, double tolerance) const {
  if (data.horizon() != horizon_ || model.state_dim != state_dim_ || model.obs_dim != obs_dim_) {
    return false;
  }
  std::vector<double> predicted(obs_dim_);
  for (std::size_t t = 0; t < horizon_; ++t) {
    const auto y = data.observation(t);
    for (std::size_t n = 0; n < particles_; ++n) {
      model.observe(theta, state(n, t), predicted);
      double r = 0.0;
      for (std::size_t k = 0; k < obs_dim_; ++k) {
        const double d = y[k] - predicted[k];
        r += d * d;
      }
      const double cached = residual(n, t);
      if (std::isinf(cached) && !std::isfinite(r)) {
        continue;
      }
      if (!(std::abs(cached - r) <= tolerance * std::max(1.0, std::abs(r)))) {
        return false;
      }
    }
  }
  return true;
}

void TrajectoryBundle::write_dump(const std::filesystem::path& path) const {
  std::string out;
  out.reserve(24 + 8 * (states_.size() + ancestors_.size() + residuals_.size()));
  put_u64(out, particles_);
  put_u64(out, horizon_);
  put_u64(out, state_dim_);
  for (std::size_t n = 0; n < particles_; ++n) {
    for (std::size_t t = 0; t < horizon_; ++t) {
      for (const double v : state(n, t)) {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  for (std::size_t n = 0; n < particles_; ++n) {
    for (std::size_t t = 0; t + 1 < horizon_; ++t) {
      put_u64(out, ancestor(n, t));
    }
  }
  for (std::size_t n = 0; n < particles_; ++n) {
    for (std::size_t t = 0; t < horizon_; ++t) {
      put_u64(out, std::bit_cast<std::uint64_t>(residual(n, t)));
    }
  }
  write_file_atomic(path, out);
}

TrajectoryBundle TrajectoryBundle::read_dump(const std::filesystem::path& path, std::size_t obs_dim,
                                             double lambda_gen) {
  const std::string in = read_file(path);
  std::size_t offset = 0;
  const auto particles = static_cast<std::size_t>(get_u64(in, offset));
  const auto horizon = static_cast<std::size_t>(get_u64(in, offset));
  const auto dx = static_cast<std::size_t>(get_u64(in, offset));
  if (particles == 0 || horizon == 0 || dx == 0 ||
      in.size() != 24 + 8 * (particles * horizon * dx + particles * (horizon - 1) + particles * horizon)) {
    throw IoError("bundle dump '" + path.string() + "' has an inconsistent size");
  }
  std::vector<double> states(particles * horizon * dx);
  std::vector<std::uint32_t> ancestors(particles * (horizon - 1));
  std::vector<double> residuals(particles * horizon);
  for (std::size_t n = 0; n < particles; ++n) {
    for (std::size_t t = 0; t < horizon; ++t) {
      for (std::size_t k = 0; k < dx; ++k) {
        states[(t * particles + n) * dx + k] = std::bit_cast<double>(get_u64(in, offset));
      }
    }
  }
  for (std::size_t n = 0; n < particles; ++n) {
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
      const auto a = get_u64(in, offset);
      if (a >= particles) {
        throw IoError("bundle dump '" + path.string() + "' has an out-of-range ancestor");
      }
      ancestors[t * particles + n] = static_cast<std::uint32_t>(a);
    }
  }
  for (std::size_t n = 0; n < particles; ++n) {
    for (std::size_t t = 0; t < horizon; ++t) {
      residuals[t * particles + n] = std::bit_cast<double>(get_u64(in, offset));
    }
  }
  return TrajectoryBundle{particles, horizon, dx, obs_dim, std::move(states), std::move(ancestors),
                          std::move(residuals), lambda_gen};
}

PfResult run_bpf(const ModelSpec& model, std::span<const double> theta, double lambda, const Dataset& data,
                 std::size_t particles, Rng& rng) {
  if (particles < 2) {
    throw std::invalid_argument("run_bpf: at least two particles are required");
  }
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("run_bpf: lambda must be positive");
  }
  if (particles > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("run_bpf: too many particles");
  }
  const std::size_t horizon = data.horizon();
  const std::size_t dx = model.state_dim;
  const std::size_t dy = model.obs_dim;
  const std::size_t du = model.input_dim;
  if (data.obs_dim() != dy || data.input_dim() != du) {
    throw std::invalid_argument("run_bpf: dataset dimensions do not match the model");
  }

  // Unvisited time steps of a degenerate run keep NaN states and +inf residuals.
  std::vector<double> states(particles * horizon * dx, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint32_t> ancestors(particles * (horizon - 1), 0);
  std::vector<double> residuals(particles * horizon, kInf);
  std::vector<double> predicted(dy);
  std::vector<double> weights(particles);
  std::vector<double> totals(horizon, kNegInf);
  AliasTable table(particles);

  auto state_at = [&](std::size_t n, std::size_t t) {
    return std::span<double>{states.data() + (t * particles + n) * dx, dx};
  };
  auto weigh = [&](std::size_t t) {
    const auto y = data.observation(t);
    double best = kInf;
    for (std::size_t n = 0; n < particles; ++n) {
      model.observe(theta, state_at(n, t), predicted);
      double r = 0.0;
      for (std::size_t k = 0; k < dy; ++k) {
        const double d = y[k] - predicted[k];
        r += d * d;
      }
      if (!std::isfinite(r)) {
        r = kInf;
      }
      residuals[t * particles + n] = r;
      best = std::min(best, r);
    }
    return best;
  };

  for (std::size_t n = 0; n < particles; ++n) {
    model.init_state(theta, rng, state_at(n, 0));
  }
  double best = weigh(0);
  const double scale = 1.0 / (2.0 * lambda);
  for (std::size_t t = 1; t < horizon && best < kInf; ++t) {
    const double* r = residuals.data() + (t - 1) * particles;
    double total = 0.0;
    for (std::size_t n = 0; n < particles; ++n) {
      weights[n] = std::exp(-(r[n] - best) * scale);
      total += weights[n];
    }
    totals[t - 1] = -best * scale + std::log(total);
    table.build(weights, total);
    const auto input = data.input(t - 1);
    for (std::size_t n = 0; n < particles; ++n) {
      const std::uint32_t a = table.draw(rng);
      ancestors[(t - 1) * particles + n] = a;
      model.transition(theta, state_at(a, t - 1), input, rng, state_at(n, t));
    }
    best = weigh(t);
  }
  if (best < kInf) {
    const double* r = residuals.data() + (horizon - 1) * particles;
    double total = 0.0;
    for (std::size_t n = 0; n < particles; ++n) {
      total += std::exp(-(r[n] - best) * scale);
    }
    totals[horizon - 1] = -best * scale + std::log(total);
  } else {
    totals.clear();
  }

  PfResult result;
  result.bundle = std::shared_ptr<const TrajectoryBundle>(new TrajectoryBundle(
      particles, horizon, dx, dy, std::move(states), std::move(ancestors), std::move(residuals), lambda,
      std::move(totals)));
  result.degenerate = result.bundle->degenerate();
  result.log_z = loglik_given_bundle(*result.bundle, lambda);
  return result;
}

double loglik_given_bundle(const TrajectoryBundle& bundle, double lambda) { return bundle.loglik(lambda); }

double extended_logweight(const TrajectoryBundle& bundle, std::span<const double> theta, double lambda,
                          const Prior& prior) {
  const double log_prior = prior.log_density(theta);
  const double terms = bundle.weight_terms(lambda);
  if (log_prior == kNegInf || terms == kNegInf) {
    return kNegInf;
  }
  return log_prior + terms;
}

double incremental_logweight(const TrajectoryBundle& bundle, double lambda_new, double lambda_old) {
  const double updated = bundle.weight_terms(lambda_new);
  const double current = bundle.weight_terms(lambda_old);
  if (updated == kNegInf) {
    return kNegInf;
  }
  return updated - current;
}

std::vector<std::size_t> resample_multinomial(std::span<const double> log_weights, std::size_t count, Rng& rng) {
  std::vector<double> cumulative;
  const double total = cumulative_weights(log_weights, cumulative);
  if (total == 0.0) {
    throw DegenerateWeights("resample_multinomial: every weight is zero");
  }
  std::vector<std::size_t> indices(count);
  for (auto& index : indices) {
    index = draw_from_cumulative(cumulative, rng.uniform() * total);
  }
  return indices;
}

std::vector<std::size_t> resample_systematic(std::span<const double> log_weights, std::size_t count, Rng& rng) {
  std::vector<double> cumulative;
  const double total = cumulative_weights(log_weights, cumulative);
  if (total == 0.0) {
    throw DegenerateWeights("resample_systematic: every weight is zero");
  }
  std::vector<std::size_t> indices(count);
  const double offset = rng.uniform();
  for (std::size_t i = 0; i < count; ++i) {
    const double target = (static_cast<double>(i) + offset) / static_cast<double>(count) * total;
    indices[i] = draw_from_cumulative(cumulative, target);
  }
  return indices;
}

}  // namespace tsmc
