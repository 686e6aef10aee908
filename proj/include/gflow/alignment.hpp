#pragma once

// Optimal molecule transport: the rotation and permutation that bring a
// target geometry z1 closest to a reference z0 under the joint cost
//
//   J(R, pi) = lambda * ||pi(R z1_x) - z0_x||^2 + (1 - lambda) * ||pi(z1_h) - z0_h||^2
//
// Translation is fixed by requiring zero-CoM inputs.

#include <nlohmann/json.hpp>

#include "gflow/geometry.hpp"

namespace gflow {

struct CostMatrix {
  // m(i, j): cost of sending atom i of z1 onto atom j of z0.
  Eigen::MatrixXd m;
};

// Entry (i, j) = lambda * |x1_i - x0_j|^2 + (1 - lambda) * |h1_i - h0_j|^2.
CostMatrix cost_matrix(const PointSet& z1, const PointSet& z0, double lambda);

// Exact linear assignment (shortest augmenting path with potentials, O(n^3)).
// Returns pi minimising sum_i c(pi[i], i).
Permutation hungarian(const CostMatrix& c);

// sum_i c(pi[i], i), accumulated in index order.
double assignment_cost(const CostMatrix& c, const Permutation& pi);

// Proper rotation R minimising ||R x_target - x_ref||_F (rows are points).
// Both inputs must be zero-CoM (max-abs CoM <= 1e-8).
Rotation kabsch(const Coords& x_target, const Coords& x_ref);

// Joint objective split into its two weighted parts.
struct OmtCost {
  double coord = 0.0;    // lambda * ||.||^2 on coordinates
  double feature = 0.0;  // (1 - lambda) * ||.||^2 on features
  double total() const { return coord + feature; }
};

OmtCost omt_objective(const PointSet& z1, const PointSet& z0, const Rotation& r,
                      const Permutation& pi, double lambda);

// lambda * ||.||_F + (1 - lambda) * ||.||_F, the un-squared form of the same objective.
double omt_objective_unsquared(const PointSet& z1, const PointSet& z0, const Rotation& r,
                               const Permutation& pi, double lambda);

struct OmtSolution {
  Rotation rotation;
  Permutation permutation;
  LatentGeometry aligned_target;  // pi(R z1)
  double cost = 0.0;              // squared joint objective at (rotation, permutation)
  double cost_unsquared = 0.0;
  OmtCost parts;
  int iterations = 0;
};

struct OmtOptions {
  double lambda = 0.5;
  // 1 = a single Hungarian -> Kabsch pass. Larger values alternate the two
  // exact half-steps from several seed rotations, keeping the best.
  int max_iters = 1;
};

OmtSolution solve_omt(const PointSet& z1, const PointSet& z0, const OmtOptions& opts = {});
inline OmtSolution solve_omt(const PointSet& z1, const PointSet& z0, double lambda, int max_iters) {
  return solve_omt(z1, z0, OmtOptions{lambda, max_iters});
}

struct OracleSolution {
  double cost = 0.0;  // global minimum of the squared objective
  Permutation permutation;
  Rotation rotation;
  double cost_unsquared = 0.0;  // global minimum of the un-squared objective
};

inline constexpr int kOracleMaxAtoms = 8;

// Exhaustive search over all n! correspondences with the exact Kabsch rotation
// for each. n <= 8.
OracleSolution brute_force_omt(const PointSet& z1, const PointSet& z0, double lambda);

nlohmann::json to_json(const OmtSolution& s);

}  // namespace gflow
