#pragma once

// Differentiable building blocks with hand-written backward passes.
//
// Parameters live in one flat buffer per network; layers only record
// offsets into it. Forward passes are const and write intermediates into a
// caller-owned cache, so one parameter snapshot can serve concurrent callers.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gflow/geometry.hpp"
#include "gflow/random.hpp"

namespace gflow::nn {

using ParamView = std::span<const double>;
using GradView = std::span<double>;

class ParamLayout {
 public:
  std::size_t allocate(std::size_t count) {
    const std::size_t off = size_;
    size_ += count;
    return off;
  }
  std::size_t size() const { return size_; }

 private:
  std::size_t size_ = 0;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

// Fully connected net acting on the rows of its input; SiLU between layers,
// final layer linear.
class DenseNet {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  DenseNet() = default;
  DenseNet(std::vector<int> widths, ParamLayout& layout);

  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }

  Eigen::MatrixXd forward(ParamView p, const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into g and returns d(loss)/d(input).
  Eigen::MatrixXd backward(ParamView p, const Cache& cache, const Eigen::MatrixXd& dy,
                           GradView g) const;

  // N(0, 1/fan_in) weights, zero biases; the last layer is scaled by `last_gain`.
  void init(std::span<double> p, Rng& rng, double last_gain = 1.0) const;

 private:
  struct Layer {
    int in = 0, out = 0;
    std::size_t w = 0, b = 0;
  };
  std::vector<int> widths_;
  std::vector<Layer> layers_;
};

struct EquivariantLayerShape {
  int in_features = 0;
  int out_features = 0;
  int hidden = 64;
  int message = 64;
  int depth = 2;  // dense layers in each sub-network
  double coord_scale = 1.0;
};

// Fully connected E(3)-equivariant message passing:
//   m_ij  = edge_net(h_i, h_j, |x_i - x_j|^2)
//   w_ij  = (coord_net(m_ij) + coord_net(m_ji)) / 2
//   x_i' = x_i + scale / (n - 1) * sum_{j != i} (x_i - x_j) w_ij
//   h_i' = node_net(h_i, sum_{j != i} m_ij)
// The symmetric pair weight makes the coordinate update sum to zero, so the
// centre of mass is left where it was. Nodes are processed in a canonical
// order, which makes node permutations act exactly on the outputs.
class EquivariantLayer {
 public:
  struct Cache {
    Coords x;
    Eigen::MatrixXd h;
    Eigen::MatrixXd messages;
    Eigen::VectorXd weights;  // unsymmetrised coord_net outputs, one per ordered edge
    DenseNet::Cache edge, coord, node;
    std::vector<int> order;  // canonical node order; x, h and messages are stored in it
  };

  EquivariantLayer() = default;
  EquivariantLayer(const EquivariantLayerShape& shape, ParamLayout& layout);

  const EquivariantLayerShape& shape() const { return shape_; }

  std::pair<Coords, Eigen::MatrixXd> forward(ParamView p, const Coords& x, const Eigen::MatrixXd& h,
                                             Cache* cache = nullptr) const;
  // Returns (dL/dx, dL/dh) for the layer inputs; parameter gradients go into g.
  std::pair<Coords, Eigen::MatrixXd> backward(ParamView p, const Cache& cache, const Coords& dx,
                                              const Eigen::MatrixXd& dh, GradView g) const;

  void init(std::span<double> p, Rng& rng, bool zero_features_out = false) const;

 private:
  std::pair<Coords, Eigen::MatrixXd> forward_canonical(ParamView p, const Coords& x, const Eigen::MatrixXd& h,
                                                       Cache* cache) const;
  std::pair<Coords, Eigen::MatrixXd> backward_canonical(ParamView p, const Cache& cache, const Coords& dx,
                                                        const Eigen::MatrixXd& dh, GradView g) const;

  EquivariantLayerShape shape_;
  DenseNet edge_net_, coord_net_, node_net_;
};

// Index of ordered edge (i, j), i != j, in the row-major edge list.
inline Eigen::Index edge_index(Eigen::Index n, Eigen::Index i, Eigen::Index j) {
  return i * (n - 1) + (j < i ? j : j - 1);
}

// Lexicographic order of the rows of [x h]. Processing nodes in this order
// makes the arithmetic independent of the caller's node numbering, so
// permuting the input permutes the output bit for bit.
std::vector<int> canonical_order(const Coords& x, const Eigen::MatrixXd& h);

// gather_rows(m, o).row(i) = m.row(o[i]); scatter_rows inverts it.
template <class M>
M gather_rows(const M& m, const std::vector<int>& order) {
  M out(m.rows(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(order[i]);
  return out;
}

template <class M>
M scatter_rows(const M& m, const std::vector<int>& order) {
  M out(m.rows(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(order[i]) = m.row(static_cast<Eigen::Index>(i));
  return out;
}

nlohmann::json to_json(const EquivariantLayerShape& s);
EquivariantLayerShape layer_shape_from_json(const nlohmann::json& j);

}  // namespace gflow::nn
