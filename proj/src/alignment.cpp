#include "gflow/alignment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace gflow {
namespace {

constexpr double kCenteredTol = 1e-8;
constexpr double kAlternationTol = 1e-10;

void check_pair(const PointSet& z1, const PointSet& z0) {
  if (z1.size() != z0.size()) throw Error("size mismatch: geometries have different atom counts");
  if (z1.feature_dim() != z0.feature_dim())
    throw Error("size mismatch: geometries have different feature widths");
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
}

// Seed rotations for the alternating search: the 24 proper symmetries of the
// cube (signed axis permutations with det +1). Identity comes first.
const std::vector<Rotation>& seed_rotations() {
  static const std::vector<Rotation> seeds = [] {
    std::vector<Rotation> out;
    std::array<int, 3> axes{0, 1, 2};
    do {
      for (int signs = 0; signs < 8; ++signs) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        for (int r = 0; r < 3; ++r) m(r, axes[static_cast<std::size_t>(r)]) = (signs >> r & 1) ? -1.0 : 1.0;
        if (m.determinant() > 0) out.push_back(Rotation::from_matrix(m));
      }
    } while (std::next_permutation(axes.begin(), axes.end()));
    std::stable_partition(out.begin(), out.end(),
                          [](const Rotation& r) { return r.matrix().isIdentity(); });
    return out;
  }();
  return seeds;
}

struct Candidate {
  Rotation rotation;
  Permutation permutation;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

// Alternates exact permutation and rotation updates starting from `start`.
// Each half-step cannot increase the objective; the best iterate is kept.
Candidate alternate(const PointSet& z1, const PointSet& z0, const Rotation& start, double lambda,
                    int max_iters) {
  Candidate best;
  Rotation r = start;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iters; ++it) {
    PointSet rotated{rotate(z1.coords, r), z1.features};
    const Permutation pi = hungarian(cost_matrix(rotated, z0, lambda));
    r = kabsch(permute_rows(z1.coords, pi), z0.coords);
    const double cost = omt_objective(z1, z0, r, pi, lambda).total();
    if (cost < best.cost) best = Candidate{r, pi, cost, it};
    if (prev - cost < kAlternationTol) break;
    prev = cost;
  }
  return best;
}

}  // namespace

CostMatrix cost_matrix(const PointSet& z1, const PointSet& z0, double lambda) {
  check_pair(z1, z0);
  check_lambda(lambda);
  const Eigen::Index n = z1.size();
  CostMatrix c{Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dx = (z1.coords.row(i) - z0.coords.row(j)).squaredNorm();
      const double dh = (z1.features.row(i) - z0.features.row(j)).squaredNorm();
      c.m(i, j) = lambda * dx + (1.0 - lambda) * dh;
    }
  }
  return c;
}

Permutation hungarian(const CostMatrix& c) {
  const int n = static_cast<int>(c.m.rows());
  if (c.m.cols() != n) throw Error("cost matrix must be square");
  if (!c.m.allFinite()) throw Error("cost matrix has non-finite entries");
  if (n == 0) return Permutation::identity(0);

  // 1-based potentials u (rows), v (columns); match[j] = row assigned to column j.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int row = 1; row <= n; ++row) {
    match[0] = row;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c.m(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> pi(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) pi[static_cast<std::size_t>(j - 1)] = match[j] - 1;
  return Permutation::from_vector(std::move(pi));
}

double assignment_cost(const CostMatrix& c, const Permutation& pi) {
  double s = 0.0;
  for (int i = 0; i < pi.size(); ++i) s += c.m(pi[i], i);
  return s;
}

Rotation kabsch(const Coords& x_target, const Coords& x_ref) {
  if (x_target.rows() != x_ref.rows()) throw Error("size mismatch: kabsch inputs differ in length");
  if (max_abs_com(x_target) > kCenteredTol || max_abs_com(x_ref) > kCenteredTol)
    throw Error("kabsch requires zero-CoM inputs");

  // Maximise tr(R H) with H = sum_i a_i b_i^T.
  const Eigen::Matrix3d h = x_target.transpose() * x_ref;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  return Rotation::from_matrix(v * d.asDiagonal() * u.transpose());
}

OmtCost omt_objective(const PointSet& z1, const PointSet& z0, const Rotation& r,
                      const Permutation& pi, double lambda) {
  check_pair(z1, z0);
  const Coords x = rotate(permute_rows(z1.coords, pi), r);
  const Eigen::MatrixXd h = permute_rows(z1.features, pi);
  return OmtCost{lambda * (x - z0.coords).squaredNorm(),
                 (1.0 - lambda) * (h - z0.features).squaredNorm()};
}

double omt_objective_unsquared(const PointSet& z1, const PointSet& z0, const Rotation& r,
                               const Permutation& pi, double lambda) {
  check_pair(z1, z0);
  const Coords x = rotate(permute_rows(z1.coords, pi), r);
  const Eigen::MatrixXd h = permute_rows(z1.features, pi);
  return lambda * (x - z0.coords).norm() + (1.0 - lambda) * (h - z0.features).norm();
}

OmtSolution solve_omt(const PointSet& z1, const PointSet& z0, const OmtOptions& opts) {
  check_pair(z1, z0);
  check_lambda(opts.lambda);
  if (opts.max_iters < 1) throw Error("max_iters must be >= 1");
  if (max_abs_com(z1.coords) > kCenteredTol || max_abs_com(z0.coords) > kCenteredTol)
    throw Error("omt requires zero-CoM inputs");

  Candidate best = alternate(z1, z0, Rotation::identity(), opts.lambda, opts.max_iters);
  if (opts.max_iters > 1) {
    const auto& seeds = seed_rotations();
    for (std::size_t s = 1; s < seeds.size(); ++s) {
      Candidate c = alternate(z1, z0, seeds[s], opts.lambda, opts.max_iters);
      if (c.cost < best.cost) best = std::move(c);
    }
  }

  OmtSolution sol;
  sol.rotation = best.rotation;
  sol.permutation = best.permutation;
  sol.aligned_target.coords = rotate(permute_rows(z1.coords, best.permutation), best.rotation);
  sol.aligned_target.features = permute_rows(z1.features, best.permutation);
  sol.parts = omt_objective(z1, z0, best.rotation, best.permutation, opts.lambda);
  sol.cost = sol.parts.total();
  sol.cost_unsquared =
      omt_objective_unsquared(z1, z0, best.rotation, best.permutation, opts.lambda);
  sol.iterations = best.iterations;
  return sol;
}

OracleSolution brute_force_omt(const PointSet& z1, const PointSet& z0, double lambda) {
  check_pair(z1, z0);
  check_lambda(lambda);
  if (z1.size() > kOracleMaxAtoms) throw Error("oracle size limit: n must be <= 8");

  const int n = static_cast<int>(z1.size());
  std::vector<int> map(static_cast<std::size_t>(n));
  std::iota(map.begin(), map.end(), 0);
  OracleSolution best;
  best.cost = std::numeric_limits<double>::infinity();
  best.cost_unsquared = std::numeric_limits<double>::infinity();
  do {
    const Permutation pi = Permutation::from_vector(map);
    const Rotation r = kabsch(permute_rows(z1.coords, pi), z0.coords);
    const double cost = omt_objective(z1, z0, r, pi, lambda).total();
    if (cost < best.cost) {
      best.cost = cost;
      best.permutation = pi;
      best.rotation = r;
    }
    // For a fixed correspondence the Kabsch rotation also minimises the
    // un-squared coordinate norm, so this minimum is exact as well.
    best.cost_unsquared = std::min(best.cost_unsquared, omt_objective_unsquared(z1, z0, r, pi, lambda));
  } while (std::next_permutation(map.begin(), map.end()));
  return best;
}

nlohmann::json to_json(const OmtSolution& s) {
  nlohmann::json rot = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    rot.push_back({s.rotation.matrix()(i, 0), s.rotation.matrix()(i, 1), s.rotation.matrix()(i, 2)});
  return {{"rotation", rot},
          {"permutation", s.permutation.map()},
          {"cost", s.cost},
          {"cost_unsquared", s.cost_unsquared},
          {"coord_part", s.parts.coord},
          {"feature_part", s.parts.feature},
          {"iterations", s.iterations}};
}

}  // namespace gflow
