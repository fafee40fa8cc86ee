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

#include "tsmc/run_config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "tsmc/errors.hpp"
#include "tsmc/io.hpp"

namespace tsmc {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kTemperedPf:
      return "tempered-pf";
    case RunMode::kTemperedExact:
      return "tempered-exact";
    case RunMode::kPmh:
      return "pmh";
    case RunMode::kScalingStudy:
      return "scaling-study";
    case RunMode::kCheck:
      return "check";
  }
  return "unknown";
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return {};
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& text) {
  const std::string value = trim(text);
  if (value.empty()) {
    throw std::invalid_argument("empty number");
  }
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || errno == ERANGE || !std::isfinite(parsed)) {
    throw std::invalid_argument("'" + value + "' is not a finite number");
  }
  return parsed;
}

std::uint64_t parse_unsigned(const std::string& text) {
  const std::string value = trim(text);
  if (value.empty() || value.front() == '-' || value.front() == '+') {
    throw std::invalid_argument("'" + value + "' is not a non-negative integer");
  }
  errno = 0;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(value.c_str(), &end, 10);
  if (end != value.c_str() + value.size() || errno == ERANGE) {
    throw std::invalid_argument("'" + value + "' is not a non-negative integer");
  }
  return parsed;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in{text};
  while (std::getline(in, item, ',')) {
    items.push_back(trim(item));
  }
  return items;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  for (const auto& item : split_list(text)) {
    values.push_back(parse_double(item));
  }
  if (values.empty()) {
    throw std::invalid_argument("empty list");
  }
  return values;
}

std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> values;
  for (const auto& item : split_list(text)) {
    values.push_back(static_cast<std::size_t>(parse_unsigned(item)));
  }
  if (values.empty()) {
    throw std::invalid_argument("empty list");
  }
  return values;
}

bool parse_bool(const std::string& text) {
  const std::string value = trim(text);
  if (value == "true" || value == "1" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no") {
    return false;
  }
  throw std::invalid_argument("'" + value + "' is not a boolean");
}

RunMode parse_mode(const std::string& text) {
  for (const auto mode :
       {RunMode::kTemperedPf, RunMode::kTemperedExact, RunMode::kPmh, RunMode::kScalingStudy, RunMode::kCheck}) {
    if (to_string(mode) == text) {
      return mode;
    }
  }
  throw std::invalid_argument("unknown mode '" + text + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"model", [](RunConfig& c, const std::string& v) { c.model = v; }},
      {"mode", [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); }},
      {"data", [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"T", [](RunConfig& c, const std::string& v) { c.horizon = parse_unsigned(v); }},
      {"data_seed", [](RunConfig& c, const std::string& v) { c.data_seed = parse_unsigned(v); }},
      {"obs_noise", [](RunConfig& c, const std::string& v) { c.obs_noise = parse_double(v); }},
      {"theta_true", [](RunConfig& c, const std::string& v) { c.theta_true = parse_double_list(v); }},
      {"prior_lower", [](RunConfig& c, const std::string& v) { c.prior_lower = parse_double_list(v); }},
      {"prior_upper", [](RunConfig& c, const std::string& v) { c.prior_upper = parse_double_list(v); }},
      {"n_x", [](RunConfig& c, const std::string& v) { c.sampler.state_particles = parse_unsigned(v); }},
      {"n_theta", [](RunConfig& c, const std::string& v) { c.sampler.population = parse_unsigned(v); }},
      {"K", [](RunConfig& c, const std::string& v) { c.sampler.sweeps = parse_unsigned(v); }},
      {"warm_moves", [](RunConfig& c, const std::string& v) { c.sampler.warm_moves = parse_unsigned(v); }},
      {"alpha", [](RunConfig& c, const std::string& v) { c.sampler.tempering.alpha = parse_double(v); }},
      {"lambda_0", [](RunConfig& c, const std::string& v) { c.sampler.tempering.lambda_0 = parse_double(v); }},
      {"lambda_target",
       [](RunConfig& c, const std::string& v) { c.sampler.tempering.lambda_target = parse_double(v); }},
      {"accept_floor",
       [](RunConfig& c, const std::string& v) { c.sampler.tempering.accept_floor = parse_double(v); }},
      {"p_max", [](RunConfig& c, const std::string& v) { c.sampler.tempering.p_max = parse_unsigned(v); }},
      {"ess_tol", [](RunConfig& c, const std::string& v) { c.sampler.tempering.ess_tol = parse_double(v); }},
      {"bisect_max_iter",
       [](RunConfig& c, const std::string& v) {
         c.sampler.tempering.bisect_max_iter = static_cast<int>(parse_unsigned(v));
       }},
      {"fallback_rho",
       [](RunConfig& c, const std::string& v) { c.sampler.tempering.fallback_rho = parse_double(v); }},
      {"proposal_scale",
       [](RunConfig& c, const std::string& v) { c.sampler.proposal.scale = parse_double_list(v); }},
      {"adapt_proposal", [](RunConfig& c, const std::string& v) { c.sampler.proposal.adapt = parse_bool(v); }},
      {"resampling",
       [](RunConfig& c, const std::string& v) {
         if (v == "multinomial") {
           c.sampler.resampling = OuterResampling::kMultinomial;
         } else if (v == "systematic") {
           c.sampler.resampling = OuterResampling::kSystematic;
         } else {
           throw std::invalid_argument("resampling must be 'multinomial' or 'systematic'");
         }
       }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         c.sampler.seed = parse_unsigned(v);
         c.seed_given = true;
       }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; }},
      {"bins", [](RunConfig& c, const std::string& v) { c.bins = parse_unsigned(v); }},
      {"grid_points", [](RunConfig& c, const std::string& v) { c.grid_points = parse_unsigned(v); }},
      {"pmh_lambda", [](RunConfig& c, const std::string& v) { c.pmh_lambda = parse_double(v); }},
      {"pmh_length", [](RunConfig& c, const std::string& v) { c.pmh_length = parse_unsigned(v); }},
      {"pmh_init", [](RunConfig& c, const std::string& v) { c.pmh_init = parse_double_list(v); }},
      {"scaling_T", [](RunConfig& c, const std::string& v) { c.scaling_horizons = parse_count_list(v); }},
      {"check_lambda", [](RunConfig& c, const std::string& v) { c.check_lambda = parse_double(v); }},
      {"check_runs", [](RunConfig& c, const std::string& v) { c.check_runs = parse_unsigned(v); }},
      {"check_chain", [](RunConfig& c, const std::string& v) { c.check_chain = parse_unsigned(v); }},
  };
  return table;
}

std::string join(const std::vector<double>& values) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << (i == 0 ? "" : ",") << values[i];
  }
  return out.str();
}

std::string join(const std::vector<std::size_t>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << (i == 0 ? "" : ",") << values[i];
  }
  return out.str();
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{text};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("result.", 0) == 0) {
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    if (const auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(where + ": key '" + key + "' already set on line " + std::to_string(prev->second));
    }
    seen[key] = line_no;
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": field '" + key + "': " + e.what());
    }
  }

  if (cfg.theta_true.empty()) {
    if (cfg.model == "linear") {
      cfg.theta_true = {0.8, -1.0};
    } else if (cfg.model == "atan") {
      cfg.theta_true = {1.0, 1.0};
    }
  }
  if (cfg.pmh_init.empty()) {
    cfg.pmh_init = cfg.theta_true;
  }
  if (cfg.sampler.proposal.scale.empty()) {
    if (const auto model = find_model(cfg.model)) {
      cfg.sampler.proposal.scale.assign(model->param_dim, 0.1);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string());
}

ModelSpec resolve_model(const RunConfig& cfg) {
  auto model = find_model(cfg.model);
  if (!model) {
    throw ConfigError("field 'model': unknown model id '" + cfg.model + "'");
  }
  if (!cfg.prior_lower.empty() || !cfg.prior_upper.empty()) {
    try {
      model->prior = Prior::uniform_box(cfg.prior_lower, cfg.prior_upper);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("fields 'prior_lower'/'prior_upper': ") + e.what());
    }
  }
  return *model;
}

void RunConfig::validate() const {
  const ModelSpec spec = resolve_model(*this);
  const std::size_t dim = spec.param_dim;
  auto fail = [](const std::string& field, const std::string& message) {
    throw ConfigError("field '" + field + "': " + message);
  };
  if (prior_lower.size() != prior_upper.size() || (!prior_lower.empty() && prior_lower.size() != dim)) {
    fail("prior_lower", "prior bounds need one entry per parameter");
  }
  if (data == "simulate") {
    if (horizon == 0) {
      fail("T", "must be >= 1");
    }
    if (!(obs_noise >= 0.0) || !std::isfinite(obs_noise)) {
      fail("obs_noise", "must be finite and >= 0");
    }
    if (theta_true.size() != dim) {
      fail("theta_true", "needs " + std::to_string(dim) + " entries");
    }
    if (!std::isfinite(spec.prior.log_density(theta_true))) {
      fail("theta_true", "lies outside the prior support");
    }
  }
  if (bins == 0) {
    fail("bins", "must be >= 1");
  }
  const bool exact = mode == RunMode::kTemperedExact;
  if ((exact || mode == RunMode::kCheck) && !spec.is_linear_gaussian()) {
    fail("mode", "'" + to_string(mode) + "' needs a linear-Gaussian model");
  }
  if (grid_points > 0 && (!spec.is_linear_gaussian() || dim > 2)) {
    fail("grid_points", "grid posteriors need a linear-Gaussian model with at most two parameters");
  }
  try {
    sampler.validate(spec, exact);
  } catch (const std::invalid_argument& e) {
    const std::string message = e.what();
    std::string field = "sampler";
    static const std::pair<const char*, const char*> kFields[] = {
        {"state_particles", "n_x"},     {"population", "n_theta"},     {"sweeps", "K"},
        {"alpha", "alpha"},             {"lambda_target", "lambda_target"}, {"lambda_0", "lambda_0"},
        {"accept_floor", "accept_floor"}, {"p_max", "p_max"},           {"ess_tol", "ess_tol"},
        {"bisect_max_iter", "bisect_max_iter"}, {"fallback_rho", "fallback_rho"},
        {"proposal", "proposal_scale"}, {"exact mode", "mode"},
    };
    for (const auto& [keyword, name] : kFields) {
      if (message.find(keyword) != std::string::npos) {
        field = name;
        break;
      }
    }
    fail(field, message);
  }
  if (mode == RunMode::kPmh) {
    if (!(pmh_lambda > 0.0)) {
      fail("pmh_lambda", "must be positive");
    }
    if (pmh_length == 0) {
      fail("pmh_length", "must be >= 1");
    }
    if (pmh_init.size() != dim || !std::isfinite(spec.prior.log_density(pmh_init))) {
      fail("pmh_init", "needs " + std::to_string(dim) + " entries inside the prior support");
    }
  }
  if (mode == RunMode::kScalingStudy) {
    if (scaling_horizons.empty()) {
      fail("scaling_T", "needs at least one horizon");
    }
    for (const auto t : scaling_horizons) {
      if (t == 0) {
        fail("scaling_T", "horizons must be >= 1");
      }
    }
    if (data != "simulate") {
      fail("data", "the scaling study simulates its own data");
    }
  }
  if (mode == RunMode::kCheck) {
    if (!(check_lambda > 0.0)) {
      fail("check_lambda", "must be positive");
    }
    if (check_runs < 2 || check_chain < 2) {
      fail("check_runs", "check_runs and check_chain must be >= 2");
    }
    if (data != "simulate") {
      fail("data", "the check suite simulates its own data");
    }
  }
}

std::string echo_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto& s = cfg.sampler;
  const auto& t = s.tempering;
  out << "model = " << cfg.model << '\n'
      << "mode = " << to_string(cfg.mode) << '\n'
      << "data = " << cfg.data << '\n'
      << "T = " << cfg.horizon << '\n'
      << "data_seed = " << cfg.data_seed << '\n'
      << "obs_noise = " << cfg.obs_noise << '\n';
  if (!cfg.theta_true.empty()) {
    out << "theta_true = " << join(cfg.theta_true) << '\n';
  }
  if (!cfg.prior_lower.empty()) {
    out << "prior_lower = " << join(cfg.prior_lower) << '\n' << "prior_upper = " << join(cfg.prior_upper) << '\n';
  }
  out << "n_x = " << s.state_particles << '\n'
      << "n_theta = " << s.population << '\n'
      << "K = " << s.sweeps << '\n'
      << "warm_moves = " << s.warm_moves << '\n'
      << "alpha = " << t.alpha << '\n'
      << "lambda_0 = " << t.lambda_0 << '\n'
      << "lambda_target = " << t.lambda_target << '\n'
      << "accept_floor = " << t.accept_floor << '\n'
      << "p_max = " << t.p_max << '\n'
      << "ess_tol = " << t.ess_tol << '\n'
      << "bisect_max_iter = " << t.bisect_max_iter << '\n'
      << "fallback_rho = " << t.fallback_rho << '\n'
      << "proposal_scale = " << join(s.proposal.scale) << '\n'
      << "adapt_proposal = " << (s.proposal.adapt ? "true" : "false") << '\n'
      << "resampling = " << (s.resampling == OuterResampling::kSystematic ? "systematic" : "multinomial") << '\n'
      << "seed = " << s.seed << '\n'
      << "out = " << cfg.out.string() << '\n'
      << "bins = " << cfg.bins << '\n'
      << "grid_points = " << cfg.grid_points << '\n'
      << "pmh_lambda = " << cfg.pmh_lambda << '\n'
      << "pmh_length = " << cfg.pmh_length << '\n';
  if (!cfg.pmh_init.empty()) {
    out << "pmh_init = " << join(cfg.pmh_init) << '\n';
  }
  if (!cfg.scaling_horizons.empty()) {
    out << "scaling_T = " << join(cfg.scaling_horizons) << '\n';
  }
  out << "check_lambda = " << cfg.check_lambda << '\n'
      << "check_runs = " << cfg.check_runs << '\n'
      << "check_chain = " << cfg.check_chain << '\n';
  return out.str();
}

}  // namespace tsmc
