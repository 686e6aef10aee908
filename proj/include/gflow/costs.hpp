#pragma once

#include <string>

#include "gflow/coupling.hpp"
#include "gflow/geometry.hpp"

namespace gflow {

// ||x1 - x0||_F + ||h1 - h0||_F, without any alignment.
double molecule_cost(const PointSet& g0, const PointSet& g1);

// Joint objective minimised over rotation and permutation, after both inputs
// are moved to zero-CoM. `exact` uses the n! oracle (n <= 8), otherwise the
// OMT solver with `max_iters`.
double optimal_molecule_cost(const PointSet& g0, const PointSet& g1, double lambda, bool exact,
                             int max_iters = 1);

struct CostReport {
  std::string space = "latent";  // "latent" or "data"
  double total_cost = 0.0;       // mean per-pair optimal cost
  double per_atom_cost = 0.0;    // sum of pair costs / sum of atom counts
  int num_pairs = 0;
  long num_atoms = 0;
  double coord_part = 0.0;
  double feature_part = 0.0;
  double total_unsquared = 0.0;  // mean of the un-squared objective at the same alignment
};

struct DistributionCostOptions {
  double lambda = 0.5;
  bool exact = false;
  int max_iters = 1;
  std::string space = "latent";
};

// Monte Carlo estimate of the expected optimal transport cost over a coupling.
CostReport distribution_cost(const CouplingSet& pairs, const DistributionCostOptions& opts);
inline CostReport distribution_cost(const CouplingSet& pairs, double lambda) {
  return distribution_cost(pairs, DistributionCostOptions{lambda});
}

inline constexpr const char* kCostReportCsvHeader =
    "space,total_cost,per_atom_cost,coord_part,feature_part,num_pairs";
std::string to_csv_row(const CostReport& r);

}  // namespace gflow
