#pragma once

// The latent flow model: an equivariant velocity field v(z, t) plus an
// optional equivariant autoencoder mapping data geometries to latents.

#include <cstdint>
#include <map>
#include <vector>

#include "gflow/geometry.hpp"
#include "gflow/nn.hpp"

namespace gflow {

struct FlowArch {
  int latent_k = 2;
  int hidden = 64;
  int layers = 3;
  int depth = 2;
  double coord_scale = 1.0;
};

// Stack of equivariant layers on (z_x, [z_h, t]). The coordinate velocity is
// the net displacement of the stack, the feature velocity the last layer's
// feature output (width k).
class VectorField {
 public:
  struct Cache {
    std::vector<nn::EquivariantLayer::Cache> layers;  // layers[l].x = coords entering layer l
    Coords final_coords;
  };

  VectorField() : VectorField(FlowArch{}) {}
  explicit VectorField(const FlowArch& arch);

  const FlowArch& arch() const { return arch_; }
  std::size_t param_count() const { return param_count_; }
  void init(std::span<double> p, std::uint64_t seed) const;

  PointSet forward(nn::ParamView p, const PointSet& z, double t, Cache* cache = nullptr) const;
  void backward(nn::ParamView p, const Cache& cache, const PointSet& adjoint, nn::GradView g) const;

 private:
  FlowArch arch_;
  std::vector<nn::EquivariantLayer> layers_;
  std::size_t param_count_ = 0;
};

struct AeArch {
  int data_d = 4;
  int latent_k = 2;
  int hidden = 32;
  int depth = 2;
  double coord_scale = 1.0;
};

// One equivariant layer plus a linear feature head on each side.
class Autoencoder {
 public:
  struct Cache {
    nn::EquivariantLayer::Cache layer;
    nn::DenseNet::Cache head;
    std::vector<int> order;
  };

  Autoencoder() : Autoencoder(AeArch{}) {}
  explicit Autoencoder(const AeArch& arch);

  const AeArch& arch() const { return arch_; }
  std::size_t param_count() const { return param_count_; }
  void init(std::span<double> p, std::uint64_t seed) const;

  // Encoder means (mu_x, mu_h) for a zero-CoM geometry.
  PointSet encode_mean(nn::ParamView p, const PointSet& g, Cache* cache = nullptr) const;
  // Decoded coordinates and feature logits (width d).
  PointSet decode_logits(nn::ParamView p, const PointSet& z, Cache* cache = nullptr) const;

  void backward_encode(nn::ParamView p, const Cache& cache, const PointSet& d_mean, nn::GradView g) const;
  // Returns the gradient with respect to the latent input.
  PointSet backward_decode(nn::ParamView p, const Cache& cache, const PointSet& d_out, nn::GradView g) const;

 private:
  AeArch arch_;
  nn::EquivariantLayer enc_layer_, dec_layer_;
  nn::DenseNet enc_head_, dec_head_;
  std::size_t param_count_ = 0;
};

struct ModelConfig {
  bool identity_latent = false;
  int data_d = 4;
  int latent_k = 2;  // ignored (= data_d) in identity-latent mode
  int hidden = 64;
  int layers = 3;
  int depth = 2;
  double coord_scale = 1.0;
  int ae_hidden = 32;
};

struct Model {
  bool identity_latent = false;
  int data_d = 4;
  VectorField flow;
  std::vector<double> flow_params;
  Autoencoder ae;
  std::vector<double> ae_params;
  // Empirical atom-count histogram of the training set, used for generation.
  std::map<int, long> size_histogram;
  // Per-channel standardisation of the encoder's feature means: the latent
  // feature is (mu_h - latent_shift) / latent_scale. Identity by default.
  Eigen::RowVectorXd latent_shift;
  Eigen::RowVectorXd latent_scale;

  int latent_k() const { return flow.arch().latent_k; }
  std::size_t param_count() const { return flow_params.size() + ae_params.size(); }
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

// Centre g, take the encoder means, standardise the feature part, add
// sigma0-scaled Gaussian noise whose coordinate part is projected to zero-CoM.
// Identity-latent models return the centred geometry unchanged.
LatentGeometry encode(const Model& m, const PointSet& g, double sigma0, std::uint64_t seed);

// Decoded geometry with softmax feature probabilities (identity: z itself).
Geometry decode(const Model& m, const PointSet& z);

PointSet forward(const Model& m, const PointSet& z, double t);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// Reconstruction objective for one zero-CoM geometry: mean squared coordinate
// error plus mean cross-entropy of the decoded softmax against each input
// row's argmax class. The latent is mu + sigma0 * noise. When `grad` is
// non-empty the parameter gradient is accumulated into it.
double reconstruction_loss(const Autoencoder& ae, nn::ParamView p, const PointSet& g,
                           const PointSet& noise, double sigma0, nn::GradView grad = {});

struct AeTrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  double sigma0 = 0.01;
  std::uint64_t seed = 0;
};

// Trains the model's autoencoder in place; returns the per-step mean loss.
std::vector<double> train_autoencoder(Model& m, const std::vector<Geometry>& data,
                                      const AeTrainConfig& cfg);

// Sets latent_shift / latent_scale to the per-channel mean and standard
// deviation of the encoder feature means over all atoms of `data`.
void fit_latent_normalization(Model& m, const std::vector<Geometry>& data);

// Noise draw used by encode(): zero-CoM coordinate part, n x k feature part.
PointSet latent_noise(Eigen::Index n, int k, std::uint64_t seed);

}  // namespace gflow
