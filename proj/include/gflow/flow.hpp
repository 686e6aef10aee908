#pragma once

// Flow matching on OMT-aligned (noise, target) pairs, ODE sampling, and
// reflow: re-pairing noise with the endpoints the learned flow sends it to.

#include <cstdint>
#include <functional>
#include <vector>

#include "gflow/coupling.hpp"
#include "gflow/data.hpp"
#include "gflow/model.hpp"
#include "gflow/ode.hpp"
#include "gflow/optim.hpp"

namespace gflow {

struct TrainConfig {
  double lambda = 0.5;
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-4;
  double sigma0 = 0.01;
  int reflow_rounds = 1;
  bool purify = true;
  std::uint64_t seed = 0;

  bool use_omt = true;       // false trains on unaligned targets (ablation)
  int omt_max_iters = 1;
  int reflow_pairs = 0;      // 0 means ten times the dataset size
  int reflow_epochs = 5;
  bool reflow_fresh = false; // re-initialise the flow before each reflow round
  SolverConfig reflow_solver;
  ValidityRule validity;      // purification filter used by reflow drivers
  int ae_epochs = 20;
  double ae_lr = 1e-3;
  ModelConfig model;
};

void validate(const TrainConfig& cfg);

// Zero-CoM standard Gaussian coordinates and standard Gaussian n x k features.
LatentGeometry sample_noise(Eigen::Index n, int k, std::uint64_t seed);

// t * z1 + (1 - t) * z0 on both channels.
LatentGeometry interpolate(const PointSet& z0, const PointSet& z1, double t);

// Mean squared error between v(z_t, t) and z1 - z0 over every entry. When
// `grad` is non-empty the flow-parameter gradient is accumulated into it.
double velocity_loss(const VectorField& field, nn::ParamView p, const PointSet& z0, const PointSet& z1,
                     double t, nn::GradView grad = {});

// velocity_loss on an aligned pair; throws "pair must be OMT-aligned" otherwise.
double fm_loss(const Model& m, const CouplingPair& pair, double t, nn::GradView grad = {});

// Encode g, draw matching noise and OMT-align the latent to it.
CouplingPair make_training_pair(const Model& m, const PointSet& g, const TrainConfig& cfg,
                                std::uint64_t seed);

struct TrainResult {
  Model model;
  std::vector<double> loss_curve;     // flow loss, one entry per optimiser step
  std::vector<double> ae_loss_curve;  // empty in identity-latent mode
};

// Builds a model from cfg.model, trains the autoencoder (unless identity
// latent), then the flow. Throws "empty dataset" on empty input.
TrainResult train(const std::vector<Geometry>& data, const TrainConfig& cfg);

// Continues flow training of `m` on fresh noise pairs for cfg.epochs epochs.
std::vector<double> train_flow(Model& m, const std::vector<Geometry>& data, const TrainConfig& cfg,
                               AdamState& adam);

// Flow training on a fixed coupling set; each step draws fresh t per pair.
std::vector<double> train_on_coupling(Model& m, const CouplingSet& pairs, int epochs, int batch_size,
                                      double lr, std::uint64_t seed, AdamState& adam);

struct OdeSample {
  LatentGeometry z1;
  int steps = 0;
  double max_com = 0.0;  // largest coordinate CoM over all accepted states
};

OdeSample sample_ode(const Model& m, const PointSet& z0, const SolverConfig& solver);

struct GeneratedSample {
  Geometry geometry;
  LatentGeometry z0;
  LatentGeometry z1;
  int steps = 0;
  double max_com = 0.0;
};

// Draws an atom count from m.size_histogram for the given seed.
int sample_size(const Model& m, std::uint64_t seed);

// Sample i uses derive_seed(seed, i) for its size and noise.
std::vector<GeneratedSample> generate(const Model& m, int count, const SolverConfig& solver,
                                      std::uint64_t seed);

using ValidityPredicate = std::function<bool(const Geometry&)>;

struct ReflowRound {
  int round = 0;
  std::size_t generated = 0;
  std::size_t kept = 0;
  double valid_fraction = 0.0;  // of generated pairs
  double random_cost = 0.0;     // mean optimal cost of independent noise/data pairs
  double estimated_cost = 0.0;  // mean optimal cost of the estimated coupling
  std::vector<double> loss_curve;
};

struct ReflowResult {
  Model model;
  CouplingSet pairs;  // coupling of the last round
  std::vector<ReflowRound> rounds;
};

// Per round: sample noise, integrate to z1', optionally keep only pairs whose
// decoded z1' satisfies `valid`, OMT-align z1' to its noise, then fine-tune
// on the kept pairs. Throws "purification rejected all samples" if nothing
// survives the filter.
ReflowResult reflow(Model m, const std::vector<Geometry>& data, const TrainConfig& cfg,
                    const ValidityPredicate& valid);

// Per-pair optimal costs of independent (noise, encoded data) pairs.
std::vector<double> random_coupling_costs(const Model& m, const std::vector<Geometry>& data, int count,
                                          const TrainConfig& cfg, std::uint64_t seed);

// Per-pair optimal costs of (noise, ODE endpoint) pairs.
std::vector<double> estimated_coupling_costs(const Model& m, int count, const SolverConfig& solver,
                                             const TrainConfig& cfg, std::uint64_t seed);

struct MeanWithError {
  double mean = 0.0;
  double std_error = 0.0;
};
MeanWithError mean_with_error(const std::vector<double>& xs);

// Flat state <-> latent geometry: coordinates row-major, then features row-major.
Eigen::VectorXd pack_state(const PointSet& z);
LatentGeometry unpack_state(const Eigen::VectorXd& y, Eigen::Index n, int k);

}  // namespace gflow
