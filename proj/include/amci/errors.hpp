#pragma once

#include <stdexcept>
#include <string>

namespace amci {

// Invalid configuration: bad parameterization, malformed config file,
// missing checkpoint.  CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure at runtime: degenerate weights, diverged training,
// non-converged inversion.  CLI maps this to exit code 3.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace amci
