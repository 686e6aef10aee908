#include "gflow/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gflow::nn {

namespace {

using MapW = Eigen::Map<const Eigen::MatrixXd>;
using MapB = Eigen::Map<const Eigen::RowVectorXd>;
using MapGW = Eigen::Map<Eigen::MatrixXd>;
using MapGB = Eigen::Map<Eigen::RowVectorXd>;

std::vector<int> sub_widths(int in, int hidden, int out, int depth) {
  std::vector<int> w{in};
  for (int l = 1; l < depth; ++l) w.push_back(hidden);
  w.push_back(out);
  return w;
}

}  // namespace

std::vector<int> canonical_order(const Coords& x, const Eigen::MatrixXd& h) {
  std::vector<int> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](int a, int b) {
    for (int c = 0; c < 3; ++c)
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    for (Eigen::Index c = 0; c < h.cols(); ++c)
      if (h(a, c) != h(b, c)) return h(a, c) < h(b, c);
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

DenseNet::DenseNet(std::vector<int> widths, ParamLayout& layout) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw Error("dense net needs at least an input and an output width");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    Layer layer;
    layer.in = widths_[l];
    layer.out = widths_[l + 1];
    layer.w = layout.allocate(static_cast<std::size_t>(layer.in * layer.out));
    layer.b = layout.allocate(static_cast<std::size_t>(layer.out));
    layers_.push_back(layer);
  }
}

Eigen::MatrixXd DenseNet::forward(ParamView p, const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.cols() != in_dim()) throw Error("dense net input width mismatch");
  if (cache) {
    cache->inputs.assign(layers_.size(), {});
    cache->pre.assign(layers_.size(), {});
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const MapW w(p.data() + L.w, L.out, L.in);
    const MapB b(p.data() + L.b, L.out);
    Eigen::MatrixXd z = a * w.transpose();
    z.rowwise() += b;
    if (cache) cache->inputs[l] = std::move(a);
    if (l + 1 < layers_.size()) {
      a = z.unaryExpr([](double v) { return silu(v); });
      if (cache) cache->pre[l] = std::move(z);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Eigen::MatrixXd DenseNet::backward(ParamView p, const Cache& cache, const Eigen::MatrixXd& dy,
                                   GradView g) const {
  if (cache.inputs.size() != layers_.size()) throw Error("backward called without a forward cache");
  Eigen::MatrixXd d = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& L = layers_[l];
    if (l + 1 < layers_.size())
      d = d.cwiseProduct(cache.pre[l].unaryExpr([](double v) { return silu_grad(v); }));
    MapGW gw(g.data() + L.w, L.out, L.in);
    MapGB gb(g.data() + L.b, L.out);
    gw.noalias() += d.transpose() * cache.inputs[l];
    gb += d.colwise().sum();
    const MapW w(p.data() + L.w, L.out, L.in);
    d = d * w;
  }
  return d;
}

void DenseNet::init(std::span<double> p, Rng& rng, double last_gain) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const double gain = (l + 1 == layers_.size()) ? last_gain : 1.0;
    const double sd = gain / std::sqrt(static_cast<double>(L.in));
    for (int k = 0; k < L.in * L.out; ++k) p[L.w + static_cast<std::size_t>(k)] = sd * normal(rng);
    for (int k = 0; k < L.out; ++k) p[L.b + static_cast<std::size_t>(k)] = 0.0;
  }
}

EquivariantLayer::EquivariantLayer(const EquivariantLayerShape& shape, ParamLayout& layout)
    : shape_(shape),
      edge_net_(sub_widths(2 * shape.in_features + 1, shape.hidden, shape.message, shape.depth), layout),
      coord_net_(sub_widths(shape.message, shape.hidden, 1, shape.depth), layout),
      node_net_(sub_widths(shape.in_features + shape.message, shape.hidden, shape.out_features,
                           shape.depth),
                layout) {}

std::pair<Coords, Eigen::MatrixXd> EquivariantLayer::forward_canonical(ParamView p, const Coords& x,
                                                                       const Eigen::MatrixXd& h,
                                                                       Cache* cache) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index f = shape_.in_features;
  if (h.rows() != n || h.cols() != f) throw Error("equivariant layer input shape mismatch");
  const Eigen::Index edges = n * (n - 1);

  Eigen::MatrixXd edge_in(edges, 2 * f + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::Index e = edge_index(n, i, j);
      edge_in.row(e).head(f) = h.row(i);
      edge_in.row(e).segment(f, f) = h.row(j);
      edge_in(e, 2 * f) = (x.row(i) - x.row(j)).squaredNorm();
    }
  }

  DenseNet::Cache* ec = cache ? &cache->edge : nullptr;
  DenseNet::Cache* cc = cache ? &cache->coord : nullptr;
  DenseNet::Cache* nc = cache ? &cache->node : nullptr;
  Eigen::MatrixXd m = edge_net_.forward(p, edge_in, ec);
  Eigen::VectorXd w = coord_net_.forward(p, m, cc).col(0);

  Coords x_out = x;
  Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(n, shape_.message);
  if (n > 1) {
    const double c = shape_.coord_scale / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::Index e = edge_index(n, i, j);
        const double s = 0.5 * (w(e) + w(edge_index(n, j, i)));
        x_out.row(i) += c * s * (x.row(i) - x.row(j));
        agg.row(i) += m.row(e);
      }
    }
  }

  Eigen::MatrixXd node_in(n, f + shape_.message);
  node_in << h, agg;
  Eigen::MatrixXd h_out = node_net_.forward(p, node_in, nc);

  if (cache) {
    cache->x = x;
    cache->h = h;
    cache->messages = std::move(m);
    cache->weights = std::move(w);
  }
  return {std::move(x_out), std::move(h_out)};
}

std::pair<Coords, Eigen::MatrixXd> EquivariantLayer::backward_canonical(ParamView p, const Cache& cache,
                                                                        const Coords& dx_out,
                                                                        const Eigen::MatrixXd& dh_out,
                                                                        GradView g) const {
  if (cache.node.inputs.empty()) throw Error("backward called without a forward cache");
  const Coords& x = cache.x;
  const Eigen::Index n = x.rows();
  const Eigen::Index f = shape_.in_features;
  const Eigen::Index edges = n * (n - 1);

  const Eigen::MatrixXd d_node_in = node_net_.backward(p, cache.node, dh_out, g);
  Eigen::MatrixXd dh = d_node_in.leftCols(f);
  const Eigen::MatrixXd d_agg = d_node_in.rightCols(shape_.message);

  Coords dx = dx_out;
  Eigen::MatrixXd dm(edges, shape_.message);
  Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(edges, 1);
  if (n > 1) {
    const double c = shape_.coord_scale / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::Index e = edge_index(n, i, j);
        const Eigen::Index r = edge_index(n, j, i);
        dm.row(e) = d_agg.row(i);
        const double s = 0.5 * (cache.weights(e) + cache.weights(r));
        const Eigen::RowVector3d diff = x.row(i) - x.row(j);
        const double ds = c * dx_out.row(i).dot(diff);
        dw(e, 0) += 0.5 * ds;
        dw(r, 0) += 0.5 * ds;
        dx.row(i) += c * s * dx_out.row(i);
        dx.row(j) -= c * s * dx_out.row(i);
      }
    }
  }

  dm += coord_net_.backward(p, cache.coord, dw, g);
  const Eigen::MatrixXd d_edge_in = edge_net_.backward(p, cache.edge, dm, g);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::Index e = edge_index(n, i, j);
      dh.row(i) += d_edge_in.row(e).head(f);
      dh.row(j) += d_edge_in.row(e).segment(f, f);
      const Eigen::RowVector3d grad = 2.0 * d_edge_in(e, 2 * f) * (x.row(i) - x.row(j));
      dx.row(i) += grad;
      dx.row(j) -= grad;
    }
  }
  return {std::move(dx), std::move(dh)};
}

std::pair<Coords, Eigen::MatrixXd> EquivariantLayer::forward(ParamView p, const Coords& x,
                                                             const Eigen::MatrixXd& h, Cache* cache) const {
  if (h.rows() != x.rows() || h.cols() != shape_.in_features)
    throw Error("equivariant layer input shape mismatch");
  std::vector<int> order = canonical_order(x, h);
  auto [xo, ho] = forward_canonical(p, gather_rows(x, order), gather_rows(h, order), cache);
  std::pair<Coords, Eigen::MatrixXd> out{scatter_rows(xo, order), scatter_rows(ho, order)};
  if (cache) cache->order = std::move(order);
  return out;
}

std::pair<Coords, Eigen::MatrixXd> EquivariantLayer::backward(ParamView p, const Cache& cache, const Coords& dx_out,
                                                              const Eigen::MatrixXd& dh_out, GradView g) const {
  if (cache.node.inputs.empty()) throw Error("backward called without a forward cache");
  auto [dx, dh] = backward_canonical(p, cache, gather_rows(dx_out, cache.order), gather_rows(dh_out, cache.order), g);
  return {scatter_rows(dx, cache.order), scatter_rows(dh, cache.order)};
}

void EquivariantLayer::init(std::span<double> p, Rng& rng, bool zero_features_out) const {
  edge_net_.init(p, rng);
  // Small coordinate weights at start keep early updates near the identity.
  coord_net_.init(p, rng, 1e-3);
  node_net_.init(p, rng, zero_features_out ? 0.0 : 1.0);
}

nlohmann::json to_json(const EquivariantLayerShape& s) {
  return {{"in_features", s.in_features}, {"out_features", s.out_features}, {"hidden", s.hidden},
          {"message", s.message},         {"depth", s.depth},               {"coord_scale", s.coord_scale}};
}

EquivariantLayerShape layer_shape_from_json(const nlohmann::json& j) {
  EquivariantLayerShape s;
  s.in_features = j.at("in_features").get<int>();
  s.out_features = j.at("out_features").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.message = j.at("message").get<int>();
  s.depth = j.at("depth").get<int>();
  s.coord_scale = j.at("coord_scale").get<double>();
  return s;
}

}  // namespace gflow::nn
