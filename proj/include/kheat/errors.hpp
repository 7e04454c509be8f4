#pragma once

#include <stdexcept>
#include <string>

namespace kheat {

// Bad input to a library call: shapes, ranges, parameter constraints.
using InvalidArgument = std::invalid_argument;

// NaN or infinity showed up in a state or intermediate.
class NumericFault : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Nonlinear midpoint solve failed to reach tolerance.
class SolverDivergence : public std::runtime_error {
public:
  SolverDivergence(const std::string& what, double residual, double time)
      : std::runtime_error(what), residual_(residual), time_(time) {}

  double residual() const { return residual_; }
  double time() const { return time_; }

private:
  double residual_;
  double time_;
};

}  // namespace kheat
