#pragma once

#include <stdexcept>
#include <string>

namespace ergodic {

// m_{s,t} vanished somewhere: broken kernel or a grid too coarse to carry mass.
struct StrongPositivityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Time not on the semigroup's step lattice.
struct LatticeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An iteration or limit did not settle within its budget.
struct NotConvergedError : std::runtime_error {
  double last_increment;
  NotConvergedError(const std::string& what, double increment)
      : std::runtime_error(what), last_increment(increment) {}
};

// Parameters outside a construction's hypotheses.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid experiment configuration; `path` names the offending key (e.g. "maxage.schedule.rate").
struct ConfigError : std::invalid_argument {
  std::string path;
  ConfigError(std::string key_path, const std::string& what)
      : std::invalid_argument(key_path.empty() ? what : key_path + ": " + what), path(std::move(key_path)) {}
};

}  // namespace ergodic
