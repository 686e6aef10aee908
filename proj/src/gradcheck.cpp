#include "gflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gflow {

GradCheckReport grad_check(const GradProblemFactory& factory, std::uint64_t seed, double tolerance,
                           double step) {
  GradProblem prob = factory(seed);
  const std::vector<double> analytic = prob.gradient(prob.params);
  if (analytic.size() != prob.params.size()) throw Error("grad_check: gradient size mismatch");

  GradCheckReport rep;
  rep.tolerance = tolerance;
  std::vector<double> p = prob.params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = prob.loss(p);
    p[i] = orig - step;
    const double down = prob.loss(p);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
    ++rep.checked;
  }
  rep.passed = rep.max_rel_error <= tolerance;
  return rep;
}

GradProblem vector_field_problem(const FlowArch& arch, int atoms, std::uint64_t seed) {
  auto field = std::make_shared<VectorField>(arch);
  GradProblem prob;
  prob.params.assign(field->param_count(), 0.0);
  field->init(prob.params, derive_seed(seed, 1));
  // Lifts the near-zero coordinate head off its initial scale so that path is exercised.
  Rng rng(derive_seed(seed, 2));
  std::normal_distribution<double> normal(0.0, 0.02);
  for (double& v : prob.params) v += normal(rng);

  auto z = std::make_shared<PointSet>();
  z->coords = gaussian_matrix(rng, atoms, 3);
  z->coords.rowwise() -= z->coords.colwise().mean();
  z->features = gaussian_matrix(rng, atoms, arch.latent_k);
  const double t = uniform01(rng);
  auto w = std::make_shared<PointSet>();
  w->coords = gaussian_matrix(rng, atoms, 3);
  w->features = gaussian_matrix(rng, atoms, arch.latent_k);

  prob.loss = [field, z, w, t](std::span<const double> p) {
    const PointSet v = field->forward(p, *z, t);
    return (v.coords.array() * w->coords.array()).sum() + (v.features.array() * w->features.array()).sum();
  };
  prob.gradient = [field, z, w, t](std::span<const double> p) {
    VectorField::Cache cache;
    field->forward(p, *z, t, &cache);
    std::vector<double> g(p.size(), 0.0);
    field->backward(p, cache, *w, g);
    return g;
  };
  return prob;
}

GradProblem dense_problem(const std::vector<int>& widths, int rows, std::uint64_t seed) {
  auto layout = std::make_shared<nn::ParamLayout>();
  auto net = std::make_shared<nn::DenseNet>(widths, *layout);
  GradProblem prob;
  prob.params.assign(layout->size(), 0.0);
  Rng rng(derive_seed(seed, 1));
  net->init(prob.params, rng);
  for (double& v : prob.params) v += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
  auto x = std::make_shared<Eigen::MatrixXd>(gaussian_matrix(rng, rows, widths.front()));
  auto y = std::make_shared<Eigen::MatrixXd>(gaussian_matrix(rng, rows, widths.back()));
  prob.loss = [net, x, y](std::span<const double> p) { return (net->forward(p, *x) - *y).squaredNorm(); };
  prob.gradient = [net, x, y](std::span<const double> p) {
    nn::DenseNet::Cache cache;
    const Eigen::MatrixXd out = net->forward(p, *x, &cache);
    std::vector<double> g(p.size(), 0.0);
    net->backward(p, cache, 2.0 * (out - *y), g);
    return g;
  };
  return prob;
}

GradProblem autoencoder_problem(const AeArch& arch, int atoms, double sigma0, std::uint64_t seed) {
  auto ae = std::make_shared<Autoencoder>(arch);
  GradProblem prob;
  prob.params.assign(ae->param_count(), 0.0);
  ae->init(prob.params, derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  std::normal_distribution<double> normal(0.0, 0.02);
  for (double& v : prob.params) v += normal(rng);
  auto g = std::make_shared<PointSet>();
  g->coords = gaussian_matrix(rng, atoms, 3);
  g->coords.rowwise() -= g->coords.colwise().mean();
  g->features = Eigen::MatrixXd::Zero(atoms, arch.data_d);
  for (int i = 0; i < atoms; ++i) g->features(i, std::uniform_int_distribution<int>(0, arch.data_d - 1)(rng)) = 1.0;
  auto noise = std::make_shared<PointSet>(latent_noise(atoms, arch.latent_k, derive_seed(seed, 3)));
  prob.loss = [ae, g, noise, sigma0](std::span<const double> p) {
    return reconstruction_loss(*ae, p, *g, *noise, sigma0);
  };
  prob.gradient = [ae, g, noise, sigma0](std::span<const double> p) {
    std::vector<double> grad(p.size(), 0.0);
    reconstruction_loss(*ae, p, *g, *noise, sigma0, grad);
    return grad;
  };
  return prob;
}

}  // namespace gflow
