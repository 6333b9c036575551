// Copyright 2026 The reweight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REWEIGHT_ERRORS_HPP
#define REWEIGHT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reweight {

/// Malformed input data (non-finite losses, dimension mismatches).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value (temperature, cap, unknown strategy, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A theoretical precondition does not hold for the supplied quantities.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An optimizer update produced non-finite parameters.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace reweight

#endif  // REWEIGHT_ERRORS_HPP
