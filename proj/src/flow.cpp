#include "gflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gflow/alignment.hpp"
#include "gflow/costs.hpp"
#include "gflow/parallel.hpp"
#include "gflow/summation.hpp"

namespace gflow {

void validate(const TrainConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  if (cfg.epochs < 0 || cfg.reflow_epochs < 0 || cfg.ae_epochs < 0) throw Error("epochs must be >= 0");
  if (cfg.batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(cfg.lr > 0.0) || !(cfg.ae_lr > 0.0)) throw Error("learning rates must be > 0");
  if (!(cfg.sigma0 >= 0.0)) throw Error("sigma0 must be >= 0");
  if (cfg.reflow_rounds < 0) throw Error("reflow_rounds must be >= 0");
  if (cfg.reflow_pairs < 0) throw Error("reflow_pairs must be >= 0");
  if (cfg.omt_max_iters < 1) throw Error("omt_max_iters must be >= 1");
  validate(cfg.reflow_solver);
}

LatentGeometry sample_noise(Eigen::Index n, int k, std::uint64_t seed) {
  if (n < 1) throw Error("noise needs n >= 1");
  PointSet eps = latent_noise(n, k, seed);
  return make_latent(std::move(eps.coords), std::move(eps.features));
}

LatentGeometry interpolate(const PointSet& z0, const PointSet& z1, double t) {
  if (z0.size() != z1.size() || z0.feature_dim() != z1.feature_dim())
    throw Error("interpolate: shape mismatch");
  LatentGeometry zt;
  zt.coords = t * z1.coords + (1.0 - t) * z0.coords;
  zt.features = t * z1.features + (1.0 - t) * z0.features;
  return zt;
}

double velocity_loss(const VectorField& field, nn::ParamView p, const PointSet& z0, const PointSet& z1,
                     double t, nn::GradView grad) {
  const LatentGeometry zt = interpolate(z0, z1, t);
  VectorField::Cache cache;
  const bool want_grad = !grad.empty();
  const PointSet v = field.forward(p, zt, t, want_grad ? &cache : nullptr);
  PointSet diff;
  diff.coords = v.coords - (z1.coords - z0.coords);
  diff.features = v.features - (z1.features - z0.features);
  const double count = static_cast<double>(z0.size() * (3 + z0.feature_dim()));
  const double loss = (diff.coords.squaredNorm() + diff.features.squaredNorm()) / count;
  if (want_grad) {
    diff.coords *= 2.0 / count;
    diff.features *= 2.0 / count;
    field.backward(p, cache, diff, grad);
  }
  return loss;
}

double fm_loss(const Model& m, const CouplingPair& pair, double t, nn::GradView grad) {
  if (!pair.aligned) throw Error("pair must be OMT-aligned");
  return velocity_loss(m.flow, m.flow_params, pair.z0, pair.z1, t, grad);
}

CouplingPair make_training_pair(const Model& m, const PointSet& g, const TrainConfig& cfg,
                                std::uint64_t seed) {
  CouplingPair pair;
  pair.z1 = encode(m, g, cfg.sigma0, derive_seed(seed, 1));
  pair.z0 = sample_noise(g.size(), m.latent_k(), derive_seed(seed, 2));
  if (cfg.use_omt) {
    pair.z1 = solve_omt(pair.z1, pair.z0, cfg.lambda, cfg.omt_max_iters).aligned_target;
    pair.aligned = true;
  }
  return pair;
}

namespace {

double draw_time(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x71));
  return uniform01(rng);
}

// One optimiser step on a batch: per-example gradients are computed into
// separate slots and reduced in index order.
template <class LossFn>
double batch_step(Model& m, std::size_t batch, const LossFn& loss_fn, AdamState& adam, double lr) {
  const std::size_t np = m.flow_params.size();
  std::vector<double> grads(batch * np, 0.0);
  std::vector<double> losses(batch, 0.0);
  parallel_for(batch, [&](std::size_t b) {
    losses[b] = loss_fn(b, nn::GradView(grads.data() + b * np, np));
  });
  std::vector<double> total(np, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < np; ++i) total[i] += grads[b * np + i];
  const double scale = 1.0 / static_cast<double>(batch);
  for (double& v : total) v *= scale;
  adam_step(m.flow_params, total, adam, AdamConfig{lr});
  CompensatedSum s;
  for (double l : losses) s.add(l);
  return s.value() * scale;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

int feature_width(const std::vector<Geometry>& data) {
  const int d = static_cast<int>(data.front().feature_dim());
  for (const auto& g : data)
    if (g.feature_dim() != d) throw Error("dataset mixes feature widths");
  return d;
}

}  // namespace

std::vector<double> train_flow(Model& m, const std::vector<Geometry>& data, const TrainConfig& cfg,
                               AdamState& adam) {
  if (data.empty()) throw Error("empty dataset");
  validate(cfg);
  if (adam.m.size() != m.flow_params.size()) adam = AdamState(m.flow_params.size());
  std::vector<double> curve;
  std::uint64_t step = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), derive_seed(cfg.seed, 0xf1, static_cast<std::uint64_t>(epoch)));
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t batch = std::min(bs, order.size() - start);
      const double loss = batch_step(
          m, batch,
          [&](std::size_t b, nn::GradView g) {
            const std::uint64_t s = derive_seed(cfg.seed, step, b);
            const CouplingPair pair = make_training_pair(m, data[order[start + b]], cfg, s);
            return velocity_loss(m.flow, m.flow_params, pair.z0, pair.z1, draw_time(s), g);
          },
          adam, cfg.lr);
      curve.push_back(loss);
      ++step;
    }
  }
  return curve;
}

std::vector<double> train_on_coupling(Model& m, const CouplingSet& pairs, int epochs, int batch_size,
                                      double lr, std::uint64_t seed, AdamState& adam) {
  if (pairs.empty()) throw Error("empty coupling");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (adam.m.size() != m.flow_params.size()) adam = AdamState(m.flow_params.size());
  std::vector<double> curve;
  std::uint64_t step = 0;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled(pairs.size(), derive_seed(seed, 0xc0, static_cast<std::uint64_t>(epoch)));
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t batch = std::min(bs, order.size() - start);
      const double loss = batch_step(
          m, batch,
          [&](std::size_t b, nn::GradView g) {
            return fm_loss(m, pairs[order[start + b]], draw_time(derive_seed(seed, step, b)), g);
          },
          adam, lr);
      curve.push_back(loss);
      ++step;
    }
  }
  return curve;
}

TrainResult train(const std::vector<Geometry>& data, const TrainConfig& cfg) {
  if (data.empty()) throw Error("empty dataset");
  validate(cfg);
  ModelConfig mc = cfg.model;
  mc.data_d = feature_width(data);
  TrainResult res;
  res.model = make_model(mc, cfg.seed);
  for (const auto& g : data) ++res.model.size_histogram[static_cast<int>(g.size())];
  AeTrainConfig ae_cfg;
  ae_cfg.epochs = cfg.ae_epochs;
  ae_cfg.batch_size = cfg.batch_size;
  ae_cfg.lr = cfg.ae_lr;
  ae_cfg.sigma0 = cfg.sigma0;
  ae_cfg.seed = derive_seed(cfg.seed, 3);
  res.ae_loss_curve = train_autoencoder(res.model, data, ae_cfg);
  fit_latent_normalization(res.model, data);
  AdamState adam(res.model.flow_params.size());
  res.loss_curve = train_flow(res.model, data, cfg, adam);
  return res;
}

Eigen::VectorXd pack_state(const PointSet& z) {
  const Eigen::Index n = z.size();
  const Eigen::Index k = z.feature_dim();
  Eigen::VectorXd y(n * (3 + k));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < 3; ++c) y[i * 3 + c] = z.coords(i, c);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < k; ++c) y[n * 3 + i * k + c] = z.features(i, c);
  return y;
}

LatentGeometry unpack_state(const Eigen::VectorXd& y, Eigen::Index n, int k) {
  if (y.size() != n * (3 + k)) throw Error("state size mismatch");
  LatentGeometry z;
  z.coords.resize(n, 3);
  z.features.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < 3; ++c) z.coords(i, c) = y[i * 3 + c];
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < k; ++c) z.features(i, c) = y[n * 3 + i * k + c];
  return z;
}

namespace {

double state_com(const Eigen::VectorXd& y, Eigen::Index n) {
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) s += y.segment<3>(i * 3);
  return (s / static_cast<double>(n)).cwiseAbs().maxCoeff();
}

}  // namespace

OdeSample sample_ode(const Model& m, const PointSet& z0, const SolverConfig& solver) {
  const Eigen::Index n = z0.size();
  const int k = m.latent_k();
  if (z0.feature_dim() != k) throw Error("latent feature width mismatch");
  if (max_abs_com(z0.coords) > 1e-8) throw Error("noise must be zero-CoM");
  const Rhs rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy = pack_state(forward(m, unpack_state(y, n, k), t));
  };
  OdeSample out;
  out.max_com = state_com(pack_state(z0), n);
  const OdeResult r = integrate(rhs, pack_state(z0), 0.0, 1.0, solver,
                                [&](double, const Eigen::VectorXd& y) {
                                  out.max_com = std::max(out.max_com, state_com(y, n));
                                });
  out.z1 = unpack_state(r.y, n, k);
  out.steps = r.steps;
  return out;
}

int sample_size(const Model& m, std::uint64_t seed) {
  if (m.size_histogram.empty()) throw Error("model has no atom-count distribution");
  long total = 0;
  for (const auto& [n, c] : m.size_histogram) total += c;
  Rng rng(seed);
  long pick = std::uniform_int_distribution<long>(0, total - 1)(rng);
  for (const auto& [n, c] : m.size_histogram) {
    if (pick < c) return n;
    pick -= c;
  }
  return m.size_histogram.rbegin()->first;
}

std::vector<GeneratedSample> generate(const Model& m, int count, const SolverConfig& solver,
                                      std::uint64_t seed) {
  if (count < 0) throw Error("count must be >= 0");
  std::vector<GeneratedSample> out(static_cast<std::size_t>(count));
  parallel_for(out.size(), [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, i);
    GeneratedSample& g = out[i];
    g.z0 = sample_noise(sample_size(m, derive_seed(s, 1)), m.latent_k(), derive_seed(s, 2));
    OdeSample r = sample_ode(m, g.z0, solver);
    g.z1 = std::move(r.z1);
    g.steps = r.steps;
    g.max_com = r.max_com;
    g.geometry = decode(m, g.z1);
  });
  return out;
}

MeanWithError mean_with_error(const std::vector<double>& xs) {
  MeanWithError r;
  if (xs.empty()) return r;
  CompensatedSum s;
  for (double x : xs) s.add(x);
  r.mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  CompensatedSum v;
  for (double x : xs) v.add((x - r.mean) * (x - r.mean));
  const double var = v.value() / static_cast<double>(xs.size() - 1);
  r.std_error = std::sqrt(var / static_cast<double>(xs.size()));
  return r;
}

std::vector<double> random_coupling_costs(const Model& m, const std::vector<Geometry>& data, int count,
                                          const TrainConfig& cfg, std::uint64_t seed) {
  if (data.empty()) throw Error("empty dataset");
  std::vector<double> costs(static_cast<std::size_t>(std::max(0, count)));
  parallel_for(costs.size(), [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, i);
    Rng rng(derive_seed(s, 3));
    const auto idx = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
    const LatentGeometry z1 = encode(m, data[idx], cfg.sigma0, derive_seed(s, 1));
    const LatentGeometry z0 = sample_noise(z1.size(), m.latent_k(), derive_seed(s, 2));
    costs[i] = optimal_molecule_cost(z0, z1, cfg.lambda, false, cfg.omt_max_iters);
  });
  return costs;
}

std::vector<double> estimated_coupling_costs(const Model& m, int count, const SolverConfig& solver,
                                             const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<double> costs(static_cast<std::size_t>(std::max(0, count)));
  parallel_for(costs.size(), [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, i);
    const LatentGeometry z0 = sample_noise(sample_size(m, derive_seed(s, 1)), m.latent_k(), derive_seed(s, 2));
    const OdeSample r = sample_ode(m, z0, solver);
    costs[i] = optimal_molecule_cost(z0, r.z1, cfg.lambda, false, cfg.omt_max_iters);
  });
  return costs;
}

ReflowResult reflow(Model m, const std::vector<Geometry>& data, const TrainConfig& cfg,
                    const ValidityPredicate& valid) {
  validate(cfg);
  if (cfg.reflow_rounds < 1) throw Error("reflow needs at least one round");
  if (data.empty()) throw Error("empty dataset");
  const int pair_count = cfg.reflow_pairs > 0 ? cfg.reflow_pairs : static_cast<int>(10 * data.size());
  ReflowResult res;
  for (int round = 0; round < cfg.reflow_rounds; ++round) {
    const std::uint64_t round_seed = derive_seed(cfg.seed, 0x5ef1, static_cast<std::uint64_t>(round));
    const auto gen = generate(m, pair_count, cfg.reflow_solver, round_seed);

    CouplingSet pairs;
    pairs.reserve(gen.size());
    for (const auto& g : gen) {
      const bool ok = !valid || valid(g.geometry);
      if (cfg.purify && !ok) continue;
      CouplingPair p;
      p.z0 = g.z0;
      p.z1 = g.z1;
      p.source = CouplingSource::estimated;
      p.valid = ok;
      pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw Error("purification rejected all samples");

    std::vector<double> costs(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
      const OmtSolution sol = solve_omt(pairs[i].z1, pairs[i].z0, cfg.lambda, cfg.omt_max_iters);
      pairs[i].z1 = sol.aligned_target;
      pairs[i].aligned = true;
      costs[i] = sol.cost;
    });

    ReflowRound info;
    info.round = round + 1;
    info.generated = gen.size();
    info.kept = pairs.size();
    info.valid_fraction =
        static_cast<double>(std::count_if(gen.begin(), gen.end(),
                                          [&](const GeneratedSample& g) { return !valid || valid(g.geometry); })) /
        static_cast<double>(gen.size());
    info.estimated_cost = mean_with_error(costs).mean;
    info.random_cost =
        mean_with_error(random_coupling_costs(m, data, static_cast<int>(pairs.size()), cfg,
                                              derive_seed(round_seed, 9)))
            .mean;

    if (cfg.reflow_fresh) m.flow.init(m.flow_params, derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(round + 1)));
    AdamState adam(m.flow_params.size());
    info.loss_curve = train_on_coupling(m, pairs, cfg.reflow_epochs, cfg.batch_size, cfg.lr,
                                        derive_seed(round_seed, 3), adam);
    res.rounds.push_back(std::move(info));
    res.pairs = std::move(pairs);
  }
  res.model = std::move(m);
  return res;
}

}  // namespace gflow
