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

#ifndef TSMC_ERRORS_HPP
#define TSMC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tsmc {

/// A numerical computation could not produce a meaningful result
/// (diverging simulation, indefinite covariance, collapsed weights).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Simulated state left the finite range.
class SimulationDivergence : public NumericalError {
 public:
  SimulationDivergence(std::size_t time_index, const std::string& what)
      : NumericalError(what), time_index_{time_index} {}

  [[nodiscard]] std::size_t time_index() const noexcept { return time_index_; }

 private:
  std::size_t time_index_;
};

/// Every weight in a set was zero (all log-weights at -inf).
class DegenerateWeights : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing an artifact failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tsmc

#endif  // TSMC_ERRORS_HPP
