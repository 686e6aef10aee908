#include "gflow/ode.hpp"

#include <algorithm>
#include <cmath>

#include "gflow/error.hpp"

namespace gflow {

SolverMethod solver_method_from_string(const std::string& s) {
  if (s == "euler") return SolverMethod::euler;
  if (s == "rk4") return SolverMethod::rk4;
  if (s == "adaptive" || s == "dopri5") return SolverMethod::adaptive;
  throw Error("unknown solver method: " + s);
}

std::string to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::euler: return "euler";
    case SolverMethod::rk4: return "rk4";
    case SolverMethod::adaptive: return "adaptive";
  }
  return "adaptive";
}

void validate(const SolverConfig& cfg) {
  if (cfg.method == SolverMethod::adaptive) {
    if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) throw Error("solver tolerances must be > 0");
    if (!(cfg.initial_step > 0.0)) throw Error("initial step must be > 0");
    if (cfg.max_steps < 1) throw Error("max_steps must be >= 1");
  } else if (cfg.fixed_steps < 1) {
    throw Error("fixed_steps must be >= 1");
  }
}

namespace {

// Running sum kept as an unevaluated pair hi + lo.
struct DoubleDouble {
  Eigen::VectorXd hi, lo;

  explicit DoubleDouble(Eigen::Index n) : hi(Eigen::VectorXd::Zero(n)), lo(Eigen::VectorXd::Zero(n)) {}

  // hi + lo += a * b, using an exact product (fma) and an exact sum (TwoSum).
  void add_product(double a, const Eigen::VectorXd& b) {
    for (Eigen::Index i = 0; i < hi.size(); ++i) {
      const double p = a * b[i];
      const double pe = std::fma(a, b[i], -p);
      const double s = hi[i] + p;
      const double bb = s - hi[i];
      const double se = (hi[i] - (s - bb)) + (p - bb);
      hi[i] = s;
      lo[i] += se + pe;
    }
  }

  Eigen::VectorXd value() const { return hi + lo; }
};

OdeResult fixed_step(const Rhs& f, const Eigen::VectorXd& y0, double t0, double t1,
                     const SolverConfig& cfg, const StepObserver& observer) {
  const int n_steps = cfg.fixed_steps;
  const Eigen::Index dim = y0.size();
  DoubleDouble disp(dim);
  OdeResult res;
  Eigen::VectorXd y = y0, k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  auto time_at = [&](int k) {
    return k == n_steps ? t1 : t0 + (t1 - t0) * (static_cast<double>(k) / n_steps);
  };
  for (int k = 0; k < n_steps; ++k) {
    const double ta = time_at(k);
    const double tb = time_at(k + 1);
    const double h = tb - ta;
    if (cfg.method == SolverMethod::euler) {
      f(ta, y, k1);
      res.evaluations += 1;
      disp.add_product(h, k1);
    } else {
      f(ta, y, k1);
      tmp = y + 0.5 * h * k1;
      f(ta + 0.5 * h, tmp, k2);
      tmp = y + 0.5 * h * k2;
      f(ta + 0.5 * h, tmp, k3);
      tmp = y + h * k3;
      f(tb, tmp, k4);
      res.evaluations += 4;
      tmp = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
      disp.add_product(h, tmp);
    }
    y = y0 + disp.value();
    ++res.steps;
    if (observer) observer(tb, y);
  }
  res.y = std::move(y);
  return res;
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
// Fifth-order weights minus the embedded fourth-order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

OdeResult dopri5(const Rhs& f, const Eigen::VectorXd& y0, double t0, double t1, const SolverConfig& cfg,
                 const StepObserver& observer) {
  const Eigen::Index dim = y0.size();
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 10.0;
  constexpr double kBeta = 0.04;
  constexpr double kAlpha = 1.0 / 5.0 - 0.75 * kBeta;

  OdeResult res;
  Eigen::VectorXd y = y0, y_new(dim), tmp(dim), err(dim);
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  double t = t0;
  double h = std::min(cfg.initial_step, span);
  double err_prev = 1e-4;
  bool last_rejected = false;
  int attempts = 0;
  f(t, y, k1);
  res.evaluations = 1;
  if (span == 0.0) {
    res.y = y;
    return res;
  }

  while (dir * (t1 - t) > 0.0) {
    if (++attempts > cfg.max_steps) throw Error("solver budget exceeded");
    const bool final_step = h >= std::abs(t1 - t) * (1.0 - 1e-12);
    if (final_step) h = std::abs(t1 - t);
    const double hs = dir * h;

    tmp = y + hs * (a21 * k1);
    f(t + c2 * hs, tmp, k2);
    tmp = y + hs * (a31 * k1 + a32 * k2);
    f(t + c3 * hs, tmp, k3);
    tmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * hs, tmp, k4);
    tmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * hs, tmp, k5);
    tmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double t_new = final_step ? t1 : t + hs;
    f(t_new, tmp, k6);
    y_new = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t_new, y_new, k7);
    res.evaluations += 6;

    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      acc += (err[i] / sc) * (err[i] / sc);
    }
    const double en = dim > 0 ? std::sqrt(acc / static_cast<double>(dim)) : 0.0;
    if (!std::isfinite(en)) throw Error("solver produced a non-finite state");

    if (en <= 1.0) {
      double fac = (en == 0.0) ? kMaxFactor
                               : kSafety * std::pow(en, -kAlpha) * std::pow(err_prev, kBeta);
      fac = std::clamp(fac, kMinFactor, kMaxFactor);
      if (last_rejected) fac = std::min(fac, 1.0);
      err_prev = std::max(en, 1e-4);
      t = t_new;
      y.swap(y_new);
      k1.swap(k7);
      ++res.steps;
      last_rejected = false;
      if (observer) observer(t, y);
      h *= fac;
    } else {
      const double fac = std::max(kMinFactor, kSafety * std::pow(en, -kAlpha));
      h *= fac;
      ++res.rejected;
      last_rejected = true;
    }
    if (!(h > 1e-14 * std::max(1.0, std::abs(t)))) throw Error("solver step size underflow");
  }
  res.y = std::move(y);
  return res;
}

}  // namespace

OdeResult integrate(const Rhs& f, const Eigen::VectorXd& y0, double t0, double t1,
                    const SolverConfig& cfg, const StepObserver& observer) {
  validate(cfg);
  if (cfg.method == SolverMethod::adaptive) return dopri5(f, y0, t0, t1, cfg, observer);
  return fixed_step(f, y0, t0, t1, cfg, observer);
}

}  // namespace gflow
