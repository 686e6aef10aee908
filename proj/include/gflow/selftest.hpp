#pragma once

// Built-in self-checks runnable from the command line: oracle agreement for
// the alignment solvers, equivariance and gradient checks for the networks,
// closed-form ODE checks and the coupling-cost comparison for the flow.

#include <cstdint>
#include <string>
#include <vector>

namespace gflow {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

// suite is one of "align", "nn", "flow", "all". Throws Error on other names.
std::vector<CheckResult> run_selftest(const std::string& suite, std::uint64_t seed = 0);

std::string format_check(const CheckResult& r);

}  // namespace gflow
