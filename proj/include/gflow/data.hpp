#pragma once

// Synthetic featured point clouds: a few rigid templates with per-point class
// labels, observed under random rotation, atom reordering and Gaussian jitter.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/geometry.hpp"

namespace gflow {

struct TemplateSpec {
  int num_templates = 4;
  std::vector<int> atoms_per_template{5, 6, 7, 8};  // cycled if shorter than num_templates
  double coord_scale = 1.0;
  int feature_classes = 4;
  double jitter_sigma = 0.05;
  std::uint64_t seed = 0;
};

struct ValidityRule {
  double min_pair_dist = 0.5;
  double max_radius = 3.0;
  double onehot_margin = 0.5;
};

void validate(const TemplateSpec& spec);
void validate(const ValidityRule& rule);

struct Validity {
  bool ok = true;
  std::string reason;  // first failed clause: "min_pair_dist", "max_radius" or "onehot_margin"
  explicit operator bool() const { return ok; }
};

// Clauses are checked in the order listed above. For d = 1 the runner-up
// feature value is taken as 0.
Validity is_valid(const PointSet& g, const ValidityRule& rule);

// Each feature row becomes the one-hot vector of its argmax (lowest index on ties).
template <PointSetType G>
G snap_onehot(G g) {
  for (Eigen::Index i = 0; i < g.features.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < g.features.cols(); ++j)
      if (g.features(i, j) > g.features(i, best)) best = j;
    g.features.row(i).setZero();
    if (g.features.cols() > 0) g.features(i, best) = 1.0;
  }
  return g;
}

// Zero-CoM templates in canonical pose. Points are placed uniformly in a ball
// of radius 1.5 * coord_scale at mutual distance >= coord_scale; labels are
// uniform over the classes.
std::vector<Geometry> make_templates(const TemplateSpec& spec);

// Every returned sample satisfies `rule`. Samples that fail are redrawn; if
// more than half of all draws fail, throws "spec inconsistent with validity rule".
std::vector<Geometry> make_dataset(const TemplateSpec& spec, int count, const ValidityRule& rule = {});

nlohmann::json to_json(const TemplateSpec& s);
TemplateSpec template_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidityRule& r);
ValidityRule validity_rule_from_json(const nlohmann::json& j);

}  // namespace gflow
