#include "gflow/model.hpp"

#include <algorithm>
#include <numeric>

#include "gflow/optim.hpp"

namespace gflow {

VectorField::VectorField(const FlowArch& arch) : arch_(arch) {
  if (arch.layers < 1 || arch.latent_k < 1 || arch.hidden < 1)
    throw Error("flow architecture needs layers, latent width and hidden width >= 1");
  nn::ParamLayout layout;
  for (int l = 0; l < arch.layers; ++l) {
    nn::EquivariantLayerShape s;
    s.in_features = (l == 0) ? arch.latent_k + 1 : arch.hidden;
    s.out_features = (l + 1 == arch.layers) ? arch.latent_k : arch.hidden;
    s.hidden = arch.hidden;
    s.message = arch.hidden;
    s.depth = arch.depth;
    s.coord_scale = arch.coord_scale;
    layers_.emplace_back(s, layout);
  }
  param_count_ = layout.size();
}

void VectorField::init(std::span<double> p, std::uint64_t seed) const {
  Rng rng(seed);
  for (const auto& layer : layers_) layer.init(p, rng);
}

PointSet VectorField::forward(nn::ParamView p, const PointSet& z, double t, Cache* cache) const {
  if (p.size() != param_count_) throw Error("flow parameter count mismatch");
  if (z.feature_dim() != arch_.latent_k) throw Error("latent feature width mismatch");
  Eigen::MatrixXd h(z.size(), arch_.latent_k + 1);
  h << z.features, Eigen::VectorXd::Constant(z.size(), t);
  Coords x = z.coords;
  if (cache) cache->layers.assign(layers_.size(), {});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto [xo, ho] = layers_[l].forward(p, x, h, cache ? &cache->layers[l] : nullptr);
    x = std::move(xo);
    h = std::move(ho);
  }
  PointSet v;
  v.coords = x - z.coords;
  v.features = std::move(h);
  if (cache) cache->final_coords = std::move(x);
  return v;
}

void VectorField::backward(nn::ParamView p, const Cache& cache, const PointSet& adjoint,
                           nn::GradView g) const {
  if (cache.layers.size() != layers_.size()) throw Error("backward called without a forward cache");
  if (g.size() != param_count_) throw Error("flow gradient buffer size mismatch");
  Coords dx = adjoint.coords;
  Eigen::MatrixXd dh = adjoint.features;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto [dxi, dhi] = layers_[l].backward(p, cache.layers[l], dx, dh, g);
    dx = std::move(dxi);
    dh = std::move(dhi);
  }
}

Autoencoder::Autoencoder(const AeArch& arch) : arch_(arch) {
  nn::ParamLayout layout;
  nn::EquivariantLayerShape enc{arch.data_d, arch.hidden, arch.hidden, arch.hidden, arch.depth,
                                arch.coord_scale};
  enc_layer_ = nn::EquivariantLayer(enc, layout);
  enc_head_ = nn::DenseNet({arch.hidden, arch.latent_k}, layout);
  nn::EquivariantLayerShape dec{arch.latent_k, arch.hidden, arch.hidden, arch.hidden, arch.depth,
                                arch.coord_scale};
  dec_layer_ = nn::EquivariantLayer(dec, layout);
  dec_head_ = nn::DenseNet({arch.hidden, arch.data_d}, layout);
  param_count_ = layout.size();
}

void Autoencoder::init(std::span<double> p, std::uint64_t seed) const {
  Rng rng(seed);
  enc_layer_.init(p, rng);
  enc_head_.init(p, rng);
  dec_layer_.init(p, rng);
  dec_head_.init(p, rng);
}

// Both halves run in the canonical node order of their input so that the
// per-row heads see the same row positions for any input numbering.
PointSet Autoencoder::encode_mean(nn::ParamView p, const PointSet& g, Cache* cache) const {
  if (g.feature_dim() != arch_.data_d) throw Error("data feature width mismatch");
  std::vector<int> order = nn::canonical_order(g.coords, g.features);
  auto [x, h] = enc_layer_.forward(p, nn::gather_rows(g.coords, order), nn::gather_rows(g.features, order),
                                   cache ? &cache->layer : nullptr);
  PointSet mu;
  mu.coords = nn::scatter_rows(x, order);
  mu.features = nn::scatter_rows(enc_head_.forward(p, h, cache ? &cache->head : nullptr), order);
  if (cache) cache->order = std::move(order);
  return mu;
}

PointSet Autoencoder::decode_logits(nn::ParamView p, const PointSet& z, Cache* cache) const {
  if (z.feature_dim() != arch_.latent_k) throw Error("latent feature width mismatch");
  std::vector<int> order = nn::canonical_order(z.coords, z.features);
  auto [x, h] = dec_layer_.forward(p, nn::gather_rows(z.coords, order), nn::gather_rows(z.features, order),
                                   cache ? &cache->layer : nullptr);
  PointSet out;
  out.coords = nn::scatter_rows(x, order);
  out.features = nn::scatter_rows(dec_head_.forward(p, h, cache ? &cache->head : nullptr), order);
  if (cache) cache->order = std::move(order);
  return out;
}

void Autoencoder::backward_encode(nn::ParamView p, const Cache& cache, const PointSet& d_mean,
                                  nn::GradView g) const {
  const Eigen::MatrixXd dh = enc_head_.backward(p, cache.head, nn::gather_rows(d_mean.features, cache.order), g);
  enc_layer_.backward(p, cache.layer, nn::gather_rows(d_mean.coords, cache.order), dh, g);
}

PointSet Autoencoder::backward_decode(nn::ParamView p, const Cache& cache, const PointSet& d_out,
                                      nn::GradView g) const {
  const Eigen::MatrixXd dh = dec_head_.backward(p, cache.head, nn::gather_rows(d_out.features, cache.order), g);
  auto [dx, dz] = dec_layer_.backward(p, cache.layer, nn::gather_rows(d_out.coords, cache.order), dh, g);
  PointSet d;
  d.coords = nn::scatter_rows(dx, cache.order);
  d.features = nn::scatter_rows(dz, cache.order);
  return d;
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m;
  m.identity_latent = cfg.identity_latent;
  m.data_d = cfg.data_d;
  FlowArch fa;
  fa.latent_k = cfg.identity_latent ? cfg.data_d : cfg.latent_k;
  fa.hidden = cfg.hidden;
  fa.layers = cfg.layers;
  fa.depth = cfg.depth;
  fa.coord_scale = cfg.coord_scale;
  m.flow = VectorField(fa);
  m.flow_params.assign(m.flow.param_count(), 0.0);
  m.flow.init(m.flow_params, derive_seed(seed, 1));
  if (!cfg.identity_latent) {
    AeArch aa;
    aa.data_d = cfg.data_d;
    aa.latent_k = cfg.latent_k;
    aa.hidden = cfg.ae_hidden;
    aa.depth = cfg.depth;
    aa.coord_scale = cfg.coord_scale;
    m.ae = Autoencoder(aa);
    m.ae_params.assign(m.ae.param_count(), 0.0);
    m.ae.init(m.ae_params, derive_seed(seed, 2));
  }
  return m;
}

LatentGeometry encode(const Model& m, const PointSet& g, double sigma0, std::uint64_t seed) {
  const PointSet centred = project_zero_com(g);
  if (m.identity_latent) return as_latent(centred);
  PointSet mu = m.ae.encode_mean(m.ae_params, centred);
  if (m.latent_scale.size() == m.latent_k()) {
    mu.features.rowwise() -= m.latent_shift;
    mu.features = mu.features.array().rowwise() / m.latent_scale.array();
  }
  if (sigma0 == 0.0) return make_latent(std::move(mu.coords), std::move(mu.features));
  const PointSet eps = latent_noise(g.size(), m.latent_k(), seed);
  return make_latent(mu.coords + sigma0 * eps.coords, mu.features + sigma0 * eps.features);
}

void fit_latent_normalization(Model& m, const std::vector<Geometry>& data) {
  if (m.identity_latent || data.empty()) return;
  const int k = m.latent_k();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(k), sq = Eigen::RowVectorXd::Zero(k);
  long rows = 0;
  for (const auto& g : data) {
    const PointSet mu = m.ae.encode_mean(m.ae_params, project_zero_com(static_cast<const PointSet&>(g)));
    sum += mu.features.colwise().sum();
    sq += mu.features.array().square().matrix().colwise().sum();
    rows += mu.size();
  }
  const Eigen::RowVectorXd mean = sum / static_cast<double>(rows);
  Eigen::RowVectorXd var = sq / static_cast<double>(rows) - mean.array().square().matrix();
  m.latent_shift = mean;
  m.latent_scale = var.array().max(1e-12).sqrt().max(1e-6).matrix();
}

PointSet latent_noise(Eigen::Index n, int k, std::uint64_t seed) {
  Rng rng(seed);
  PointSet eps;
  eps.coords = gaussian_matrix(rng, n, 3);
  eps.coords.rowwise() -= eps.coords.colwise().mean();
  eps.features = gaussian_matrix(rng, n, k);
  return eps;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Geometry decode(const Model& m, const PointSet& z) {
  if (m.identity_latent) return as_geometry(z);
  PointSet raw{z.coords, z.features};
  if (m.latent_scale.size() == m.latent_k()) {
    raw.features = raw.features.array().rowwise() * m.latent_scale.array();
    raw.features.rowwise() += m.latent_shift;
  }
  const PointSet out = m.ae.decode_logits(m.ae_params, raw);
  return make_geometry(out.coords, softmax_rows(out.features));
}

PointSet forward(const Model& m, const PointSet& z, double t) {
  return m.flow.forward(m.flow_params, z, t);
}

double reconstruction_loss(const Autoencoder& ae, nn::ParamView p, const PointSet& g,
                           const PointSet& noise, double sigma0, nn::GradView grad) {
  const bool want_grad = !grad.empty();
  Autoencoder::Cache enc_cache, dec_cache;
  const PointSet mu = ae.encode_mean(p, g, want_grad ? &enc_cache : nullptr);
  PointSet z;
  z.coords = mu.coords + sigma0 * noise.coords;
  z.features = mu.features + sigma0 * noise.features;
  const PointSet out = ae.decode_logits(p, z, want_grad ? &dec_cache : nullptr);

  const Eigen::Index n = g.size();
  const double coord_count = static_cast<double>(n * 3);
  const Coords diff = out.coords - g.coords;
  const Eigen::MatrixXd probs = softmax_rows(out.features);
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(n, g.feature_dim());
  double ce = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index cls = 0;
    g.features.row(i).maxCoeff(&cls);
    target(i, cls) = 1.0;
    ce -= std::log(std::max(probs(i, cls), 1e-300));
  }
  const double loss = diff.squaredNorm() / coord_count + ce / static_cast<double>(n);
  if (!want_grad) return loss;

  PointSet d_out;
  d_out.coords = (2.0 / coord_count) * diff;
  d_out.features = (probs - target) / static_cast<double>(n);
  const PointSet dz = ae.backward_decode(p, dec_cache, d_out, grad);
  ae.backward_encode(p, enc_cache, dz, grad);
  return loss;
}

std::vector<double> train_autoencoder(Model& m, const std::vector<Geometry>& data,
                                      const AeTrainConfig& cfg) {
  if (m.identity_latent) return {};
  if (data.empty()) throw Error("empty dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw Error("invalid autoencoder training config");
  AdamState adam(m.ae_params.size());
  const AdamConfig adam_cfg{cfg.lr};
  std::vector<double> grad(m.ae_params.size());
  std::vector<std::size_t> order(data.size());
  std::vector<double> curve;
  Rng shuffle_rng(derive_seed(cfg.seed, 0xae));
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const PointSet g = project_zero_com(static_cast<const PointSet&>(data[order[b]]));
        const PointSet eps = latent_noise(g.size(), m.latent_k(), derive_seed(cfg.seed, step, b));
        batch_loss += reconstruction_loss(m.ae, m.ae_params, g, eps, cfg.sigma0, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& v : grad) v *= scale;
      adam_step(m.ae_params, grad, adam, adam_cfg);
      curve.push_back(batch_loss * scale);
      ++step;
    }
  }
  return curve;
}

}  // namespace gflow
