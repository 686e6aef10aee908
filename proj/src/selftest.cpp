#include "gflow/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "gflow/alignment.hpp"
#include "gflow/data.hpp"
#include "gflow/flow.hpp"
#include "gflow/gradcheck.hpp"

namespace gflow {

namespace {

PointSet random_cloud(Rng& rng, int n, int d) {
  PointSet g;
  g.coords = gaussian_matrix(rng, n, 3);
  g.coords.rowwise() -= g.coords.colwise().mean();
  g.features = gaussian_matrix(rng, n, d);
  return g;
}

double enumerate_assignment(const Eigen::MatrixXd& c) {
  std::vector<int> p(static_cast<std::size_t>(c.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += c(p[i], static_cast<Eigen::Index>(i));
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

std::vector<CheckResult> align_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(seed, 0xa1));

  {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + trial % 6;
      const CostMatrix c{gaussian_matrix(rng, n, n).cwiseAbs()};
      worst = std::max(worst, std::abs(assignment_cost(c, hungarian(c)) - enumerate_assignment(c.m)));
    }
    out.push_back({"align", "hungarian vs enumeration", worst <= 1e-12, worst, 1e-12, "100 matrices"});
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const PointSet g = random_cloud(rng, 6, 1);
      const Rotation planted = random_rotation(rng());
      const Rotation r = kabsch(rotate(g.coords, planted.inverse()), g.coords);
      worst = std::max(worst, (r.matrix() - planted.matrix()).norm());
    }
    out.push_back({"align", "kabsch planted rotation", worst <= 1e-9, worst, 1e-9, "50 clouds"});
  }
  {
    int agree = 0;
    const int trials = 60;
    double below = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      const int n = 3 + trial % 3;
      const PointSet z1 = random_cloud(rng, n, 2), z0 = random_cloud(rng, n, 2);
      const double c = solve_omt(z1, z0, 0.5, 10).cost;
      const double o = brute_force_omt(z1, z0, 0.5).cost;
      if (std::abs(c - o) <= 1e-8) ++agree;
      below = std::max(below, o - c);
    }
    const double rate = static_cast<double>(agree) / trials;
    out.push_back({"align", "omt vs exhaustive oracle", rate >= 0.9 && below <= 1e-9, rate, 0.9,
                   fmt::format("agreement rate, max undershoot {:.2e}", below)});
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const PointSet z1 = random_cloud(rng, 5, 2), z0 = random_cloud(rng, 5, 2);
      const double base = brute_force_omt(z1, z0, 0.5).cost;
      Translation t;
      t.t = Eigen::Vector3d(gaussian_matrix(rng, 3, 1));
      PointSet moved = apply_rigid(z1, random_rotation(rng()), t);
      moved = apply_permutation(moved, random_permutation(5, rng()));
      worst = std::max(worst, std::abs(brute_force_omt(project_zero_com(moved), z0, 0.5).cost - base));
    }
    out.push_back({"align", "oracle cost invariance", worst <= 1e-8, worst, 1e-8, "20 trials"});
  }
  return out;
}

std::vector<CheckResult> nn_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(seed, 0xb2));
  FlowArch arch;
  arch.latent_k = 2;
  arch.hidden = 12;
  arch.layers = 2;
  {
    double rot_err = 0.0, feat_err = 0.0, perm_err = 0.0, com = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const VectorField field(arch);
      std::vector<double> p(field.param_count());
      field.init(p, rng());
      for (double& v : p) v += 0.2 * std::normal_distribution<double>(0.0, 1.0)(rng);
      const PointSet z = random_cloud(rng, 6, arch.latent_k);
      const double t = uniform01(rng);
      const Rotation r = random_rotation(rng());
      const Permutation pi = random_permutation(6, rng());
      const PointSet v = field.forward(p, z, t);
      const PointSet vr = field.forward(p, apply_rigid(z, r), t);
      const PointSet vp = field.forward(p, apply_permutation(z, pi), t);
      rot_err = std::max(rot_err, (vr.coords - rotate(v.coords, r)).cwiseAbs().maxCoeff());
      feat_err = std::max(feat_err, (vr.features - v.features).cwiseAbs().maxCoeff());
      perm_err = std::max(perm_err, (vp.coords - permute_rows(v.coords, pi)).cwiseAbs().maxCoeff());
      perm_err = std::max(perm_err, (vp.features - permute_rows(v.features, pi)).cwiseAbs().maxCoeff());
      com = std::max(com, max_abs_com(v.coords));
    }
    out.push_back({"nn", "rotation equivariance", rot_err <= 1e-7, rot_err, 1e-7, "coordinate outputs"});
    out.push_back({"nn", "rotation invariance", feat_err <= 1e-7, feat_err, 1e-7, "feature outputs"});
    out.push_back({"nn", "permutation equivariance", perm_err == 0.0, perm_err, 0.0, "exact, all outputs"});
    out.push_back({"nn", "zero-CoM velocity", com <= 1e-9, com, 1e-9, "coordinate outputs"});
  }
  {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 2; ++s) {
      const auto rep = grad_check([&](std::uint64_t sd) { return vector_field_problem(arch, 4, sd); },
                                  derive_seed(seed, s), 1e-4);
      worst = std::max(worst, rep.max_rel_error);
    }
    out.push_back({"nn", "vector field gradient", worst <= 1e-4, worst, 1e-4, "central differences"});
  }
  {
    const auto rep = grad_check([](std::uint64_t sd) { return dense_problem({3, 5, 2}, 4, sd); }, seed, 1e-6);
    out.push_back({"nn", "dense gradient", rep.passed, rep.max_rel_error, 1e-6, "central differences"});
  }
  return out;
}

std::vector<CheckResult> flow_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(seed, 0xc3));
  {
    const Eigen::VectorXd y0 = gaussian_matrix(rng, 12, 1);
    const Eigen::VectorXd c = gaussian_matrix(rng, 12, 1);
    SolverConfig cfg;
    cfg.method = SolverMethod::euler;
    cfg.fixed_steps = 37;
    const auto r = integrate([&](double, const Eigen::VectorXd&, Eigen::VectorXd& dy) { dy = c; }, y0, 0.0, 1.0, cfg);
    const Eigen::VectorXd expect = y0 + c;
    const double err = (r.y - expect).cwiseAbs().maxCoeff();
    out.push_back({"flow", "euler constant field", err == 0.0, err, 0.0, "exact"});
  }
  {
    const Eigen::VectorXd y0 = gaussian_matrix(rng, 6, 1);
    const Eigen::VectorXd a = gaussian_matrix(rng, 6, 1);
    SolverConfig cfg;
    cfg.method = SolverMethod::rk4;
    cfg.fixed_steps = 50;
    // dy/dt = a t: y(1) = y0 + a / 2.
    const auto r = integrate([&](double t, const Eigen::VectorXd&, Eigen::VectorXd& dy) { dy = a * t; }, y0, 0.0,
                             1.0, cfg);
    const double err = (r.y - (y0 + 0.5 * a)).cwiseAbs().maxCoeff();
    out.push_back({"flow", "rk4 linear field", err <= 1e-10, err, 1e-10, "closed form"});
  }
  {
    TemplateSpec spec;
    spec.atoms_per_template = {4, 5};
    spec.num_templates = 2;
    spec.seed = seed;
    const auto data = make_dataset(spec, 64);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.model.identity_latent = true;
    cfg.model.hidden = 16;
    cfg.model.layers = 2;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.lr = 3e-3;
    const TrainResult tr = train(data, cfg);
    const int count = 150;
    const auto est = mean_with_error(estimated_coupling_costs(tr.model, count, SolverConfig{}, cfg, derive_seed(seed, 1)));
    const auto rnd = mean_with_error(random_coupling_costs(tr.model, data, count, cfg, derive_seed(seed, 2)));
    const double se = std::hypot(est.std_error, rnd.std_error);
    const double margin = rnd.mean + 2.0 * se - est.mean;
    out.push_back({"flow", "estimated coupling cost <= random", margin >= 0.0, est.mean, rnd.mean + 2.0 * se,
                   fmt::format("estimated {:.4f} vs random {:.4f} (+2se {:.4f})", est.mean, rnd.mean, 2.0 * se)});
  }
  return out;
}

}  // namespace

std::vector<CheckResult> run_selftest(const std::string& suite, std::uint64_t seed) {
  if (suite != "align" && suite != "nn" && suite != "flow" && suite != "all")
    throw Error("unknown selftest suite: " + suite);
  std::vector<CheckResult> out;
  auto add = [&](std::vector<CheckResult> rs) { out.insert(out.end(), rs.begin(), rs.end()); };
  if (suite == "align" || suite == "all") add(align_suite(seed));
  if (suite == "nn" || suite == "all") add(nn_suite(seed));
  if (suite == "flow" || suite == "all") add(flow_suite(seed));
  return out;
}

std::string format_check(const CheckResult& r) {
  return fmt::format("[{}] {:<6} {:<36} measured={:.3e} tol={:.3e}  {}", r.passed ? "PASS" : "FAIL", r.suite,
                     r.name, r.measured, r.tolerance, r.detail);
}

}  // namespace gflow
