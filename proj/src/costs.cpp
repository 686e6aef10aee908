#include "gflow/costs.hpp"

#include <fmt/format.h>

#include "gflow/alignment.hpp"
#include "gflow/summation.hpp"

namespace gflow {

void validate(const CouplingPair& p) {
  validate(static_cast<const PointSet&>(p.z0));
  validate(static_cast<const PointSet&>(p.z1));
  if (p.z0.size() != p.z1.size() || p.z0.feature_dim() != p.z1.feature_dim())
    throw Error("coupling pair size mismatch");
  if (max_abs_com(p.z0.coords) > 1e-8 || max_abs_com(p.z1.coords) > 1e-8)
    throw Error("coupling pair coordinates must be zero-CoM");
}

double molecule_cost(const PointSet& g0, const PointSet& g1) {
  if (g0.size() != g1.size() || g0.feature_dim() != g1.feature_dim())
    throw Error("size mismatch: geometries have different shapes");
  return (g1.coords - g0.coords).norm() + (g1.features - g0.features).norm();
}

double optimal_molecule_cost(const PointSet& g0, const PointSet& g1, double lambda, bool exact,
                             int max_iters) {
  const PointSet z0 = project_zero_com(g0);
  const PointSet z1 = project_zero_com(g1);
  if (exact) return brute_force_omt(z1, z0, lambda).cost;
  return solve_omt(z1, z0, OmtOptions{lambda, max_iters}).cost;
}

CostReport distribution_cost(const CouplingSet& pairs, const DistributionCostOptions& opts) {
  if (pairs.empty()) throw Error("empty coupling");
  CompensatedSum total, coord, feature, unsquared;
  long atoms = 0;
  for (const CouplingPair& p : pairs) {
    if (p.z0.size() != p.z1.size()) throw Error("coupling pair size mismatch");
    const PointSet z0 = project_zero_com(static_cast<const PointSet&>(p.z0));
    const PointSet z1 = project_zero_com(static_cast<const PointSet&>(p.z1));
    OmtCost parts;
    double cost_unsq = 0.0;
    if (opts.exact) {
      const OracleSolution o = brute_force_omt(z1, z0, opts.lambda);
      parts = omt_objective(z1, z0, o.rotation, o.permutation, opts.lambda);
      cost_unsq = omt_objective_unsquared(z1, z0, o.rotation, o.permutation, opts.lambda);
    } else {
      const OmtSolution s = solve_omt(z1, z0, OmtOptions{opts.lambda, opts.max_iters});
      parts = s.parts;
      cost_unsq = s.cost_unsquared;
    }
    total.add(parts.total());
    coord.add(parts.coord);
    feature.add(parts.feature);
    unsquared.add(cost_unsq);
    atoms += static_cast<long>(p.z0.size());
  }
  const double count = static_cast<double>(pairs.size());
  CostReport r;
  r.space = opts.space;
  r.num_pairs = static_cast<int>(pairs.size());
  r.num_atoms = atoms;
  r.total_cost = total.value() / count;
  r.per_atom_cost = total.value() / static_cast<double>(atoms);
  r.coord_part = coord.value() / count;
  r.feature_part = feature.value() / count;
  r.total_unsquared = unsquared.value() / count;
  return r;
}

std::string to_csv_row(const CostReport& r) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{}", r.space, r.total_cost,
                     r.per_atom_cost, r.coord_part, r.feature_part, r.num_pairs);
}

}  // namespace gflow
