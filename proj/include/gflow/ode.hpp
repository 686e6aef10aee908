#pragma once

// Integrators for dy/dt = f(t, y) on a flat state vector.

#include <functional>
#include <string>

#include <Eigen/Core>

namespace gflow {

enum class SolverMethod { euler, rk4, adaptive };

SolverMethod solver_method_from_string(const std::string& s);
std::string to_string(SolverMethod m);

struct SolverConfig {
  SolverMethod method = SolverMethod::adaptive;
  int fixed_steps = 100;  // euler / rk4
  double rtol = 1e-4;     // adaptive
  double atol = 1e-5;
  double initial_step = 0.05;
  int max_steps = 10000;  // attempted adaptive steps before giving up
};

// Throws Error on non-positive tolerances or step counts.
void validate(const SolverConfig& cfg);

using Rhs = std::function<void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt)>;
// Called after every accepted step with the new time and state.
using StepObserver = std::function<void(double t, const Eigen::VectorXd& y)>;

struct OdeResult {
  Eigen::VectorXd y;
  int steps = 0;     // accepted steps
  int rejected = 0;  // adaptive only
  int evaluations = 0;
};

// Fixed-step methods accumulate the displacement y - y0 in double-double
// arithmetic, so a constant field integrates to y0 + c (t1 - t0) without
// rounding drift. The adaptive method is Dormand-Prince 5(4) with FSAL and a
// PI step-size controller on the RMS-scaled local error.
OdeResult integrate(const Rhs& f, const Eigen::VectorXd& y0, double t0, double t1,
                    const SolverConfig& cfg, const StepObserver& observer = {});

}  // namespace gflow
