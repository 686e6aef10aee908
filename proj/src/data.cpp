#include "gflow/data.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "gflow/parallel.hpp"
#include "gflow/random.hpp"

namespace gflow {

void validate(const TemplateSpec& spec) {
  if (spec.num_templates < 1) throw Error("num_templates must be >= 1");
  if (spec.atoms_per_template.empty()) throw Error("atoms_per_template must not be empty");
  for (int n : spec.atoms_per_template)
    if (n < 2) throw Error("template sizes must be >= 2");
  if (!(spec.coord_scale > 0.0)) throw Error("coord_scale must be > 0");
  if (spec.feature_classes < 1) throw Error("feature_classes must be >= 1");
  if (!(spec.jitter_sigma >= 0.0)) throw Error("jitter_sigma must be >= 0");
}

void validate(const ValidityRule& rule) {
  if (!(rule.min_pair_dist > 0.0)) throw Error("min_pair_dist must be > 0");
  if (!(rule.min_pair_dist < rule.max_radius)) throw Error("min_pair_dist must be < max_radius");
  if (!(rule.onehot_margin > 0.0 && rule.onehot_margin <= 1.0))
    throw Error("onehot_margin must lie in (0, 1]");
}

Validity is_valid(const PointSet& g, const ValidityRule& rule) {
  const Eigen::Index n = g.size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if ((g.coords.row(i) - g.coords.row(j)).norm() < rule.min_pair_dist) return {false, "min_pair_dist"};
  for (Eigen::Index i = 0; i < n; ++i)
    if (g.coords.row(i).norm() > rule.max_radius) return {false, "max_radius"};
  for (Eigen::Index i = 0; i < n; ++i) {
    double first = -std::numeric_limits<double>::infinity();
    double second = g.features.cols() == 1 ? 0.0 : -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < g.features.cols(); ++j) {
      const double v = g.features(i, j);
      if (v > first) {
        second = std::max(second, first);
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (!(first - second >= rule.onehot_margin)) return {false, "onehot_margin"};
  }
  return {};
}

std::vector<Geometry> make_templates(const TemplateSpec& spec) {
  validate(spec);
  std::vector<Geometry> out;
  for (int t = 0; t < spec.num_templates; ++t) {
    const int n = spec.atoms_per_template[static_cast<std::size_t>(t) % spec.atoms_per_template.size()];
    Rng rng(derive_seed(spec.seed, 0x7e3, static_cast<std::uint64_t>(t)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double radius = 1.5 * spec.coord_scale;
    const double min_dist = spec.coord_scale;
    Coords x(n, 3);
    int placed = 0;
    for (int tries = 0; placed < n; ++tries) {
      if (tries > 100000) throw Error("template packing failed");
      const Eigen::RowVector3d p(u(rng), u(rng), u(rng));
      if (p.norm() > 1.0) continue;
      const Eigen::RowVector3d q = radius * p;
      bool ok = true;
      for (int j = 0; j < placed && ok; ++j) ok = (x.row(j) - q).norm() >= min_dist;
      if (ok) x.row(placed++) = q;
    }
    Features h = Features::Zero(n, spec.feature_classes);
    std::uniform_int_distribution<int> cls(0, spec.feature_classes - 1);
    for (int i = 0; i < n; ++i) h(i, cls(rng)) = 1.0;
    out.push_back(project_zero_com(make_geometry(std::move(x), std::move(h), "template" + std::to_string(t))));
  }
  return out;
}

namespace {

constexpr int kMaxAttemptsPerSample = 64;

Geometry draw_sample(const std::vector<Geometry>& templates, const TemplateSpec& spec, std::uint64_t seed,
                     std::size_t* which) {
  Rng rng(seed);
  const auto t = std::uniform_int_distribution<std::size_t>(0, templates.size() - 1)(rng);
  *which = t;
  Geometry g = apply_rigid(templates[t], random_rotation(derive_seed(seed, 1)));
  g = apply_permutation(g, random_permutation(static_cast<int>(g.size()), derive_seed(seed, 2)));
  if (spec.jitter_sigma > 0.0) {
    Rng jr(derive_seed(seed, 3));
    g.coords += spec.jitter_sigma * Coords(gaussian_matrix(jr, g.size(), 3));
  }
  return project_zero_com(std::move(g));
}

}  // namespace

std::vector<Geometry> make_dataset(const TemplateSpec& spec, int count, const ValidityRule& rule) {
  if (count < 1) throw Error("count must be >= 1");
  validate(rule);
  const std::vector<Geometry> templates = make_templates(spec);
  std::vector<Geometry> out(static_cast<std::size_t>(count));
  std::vector<int> rejected(out.size(), 0);
  std::atomic<bool> hopeless{false};
  parallel_for(out.size(), [&](std::size_t i) {
    for (int a = 0; a < kMaxAttemptsPerSample; ++a) {
      if (hopeless.load()) return;
      std::size_t t = 0;
      Geometry g = draw_sample(templates, spec, derive_seed(spec.seed, 0xda7a, derive_seed(i, a)), &t);
      if (is_valid(g, rule)) {
        g.tag = templates[t].tag;
        out[i] = std::move(g);
        return;
      }
      ++rejected[i];
    }
    hopeless.store(true);
  });
  long total_rejected = 0;
  for (int r : rejected) total_rejected += r;
  // More rejected draws than accepted ones means a rejection rate above one half.
  if (hopeless.load() || total_rejected > count)
    throw Error("spec inconsistent with validity rule");
  return out;
}

nlohmann::json to_json(const TemplateSpec& s) {
  return {{"num_templates", s.num_templates}, {"atoms_per_template", s.atoms_per_template},
          {"coord_scale", s.coord_scale},     {"feature_classes", s.feature_classes},
          {"jitter_sigma", s.jitter_sigma},   {"seed", s.seed}};
}

TemplateSpec template_spec_from_json(const nlohmann::json& j) {
  TemplateSpec s;
  s.num_templates = j.value("num_templates", s.num_templates);
  s.atoms_per_template = j.value("atoms_per_template", s.atoms_per_template);
  s.coord_scale = j.value("coord_scale", s.coord_scale);
  s.feature_classes = j.value("feature_classes", s.feature_classes);
  s.jitter_sigma = j.value("jitter_sigma", s.jitter_sigma);
  s.seed = j.value("seed", s.seed);
  validate(s);
  return s;
}

nlohmann::json to_json(const ValidityRule& r) {
  return {{"min_pair_dist", r.min_pair_dist}, {"max_radius", r.max_radius}, {"onehot_margin", r.onehot_margin}};
}

ValidityRule validity_rule_from_json(const nlohmann::json& j) {
  ValidityRule r;
  r.min_pair_dist = j.value("min_pair_dist", r.min_pair_dist);
  r.max_radius = j.value("max_radius", r.max_radius);
  r.onehot_margin = j.value("onehot_margin", r.onehot_margin);
  validate(r);
  return r;
}

}  // namespace gflow
