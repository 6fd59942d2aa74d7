#pragma once

#include <stdexcept>
#include <string>

namespace rcbf {

/// Invalid parameters, dimension mismatches, unknown configuration keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown inside the QP solver (not infeasibility, which is a status).
class SolverFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// rank(ĝ(x)) < m: the pseudo-inverse matching matrix does not exist at this state.
class MatchingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scenario left its valid chart (e.g. singular input matrix).
class ScenarioFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rcbf
