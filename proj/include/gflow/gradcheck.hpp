#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gflow/model.hpp"

namespace gflow {

// A scalar loss over a flat parameter vector together with its analytic gradient.
struct GradProblem {
  std::vector<double> params;
  std::function<double(std::span<const double>)> loss;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

using GradProblemFactory = std::function<GradProblem(std::uint64_t seed)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

// Relative errors use max(|analytic|, |numeric|, 1e-3) as denominator, so
// near-zero gradients are judged on absolute error.
inline constexpr double kGradCheckFloor = 1e-3;

// Central differences with the given step on every parameter.
GradCheckReport grad_check(const GradProblemFactory& factory, std::uint64_t seed, double tolerance,
                           double step = 1e-5);

// loss = <W, v(z, t)> for random W, z, t on a freshly initialised field.
GradProblem vector_field_problem(const FlowArch& arch, int atoms, std::uint64_t seed);
// loss = ||net(X) - Y||^2 on a dense net.
GradProblem dense_problem(const std::vector<int>& widths, int rows, std::uint64_t seed);
// Reconstruction loss through encoder and decoder.
GradProblem autoencoder_problem(const AeArch& arch, int atoms, double sigma0, std::uint64_t seed);

}  // namespace gflow
