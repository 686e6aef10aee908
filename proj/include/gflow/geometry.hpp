#pragma once

// Featured point sets <coords, features> and the rigid / permutation group
// actions on them. Coordinates are n x 3, features n x d, both real.

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gflow/error.hpp"

namespace gflow {

using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Features = Eigen::MatrixXd;

struct PointSet {
  Coords coords;
  Features features;

  Eigen::Index size() const { return coords.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }

  bool operator==(const PointSet& o) const {
    return coords.rows() == o.coords.rows() && features.rows() == o.features.rows() &&
           features.cols() == o.features.cols() && coords == o.coords && features == o.features;
  }
};

// A data-space geometry, optionally tagged with where it came from.
struct Geometry : PointSet {
  std::string tag;

  bool operator==(const Geometry& o) const {
    return PointSet::operator==(o) && tag == o.tag;
  }
};

// An encoded geometry z = <z_x, z_h>; z_h has the latent width k.
struct LatentGeometry : PointSet {};

template <class G>
concept PointSetType = std::derived_from<G, PointSet>;

// Throws Error unless rows agree, n >= 1 and every entry is finite.
void validate(const PointSet& g);

Geometry make_geometry(Coords coords, Features features, std::string tag = {});
LatentGeometry make_latent(Coords coords, Features features);

inline LatentGeometry as_latent(const PointSet& g) { return make_latent(g.coords, g.features); }
inline Geometry as_geometry(const PointSet& g, std::string tag = {}) {
  return make_geometry(g.coords, g.features, std::move(tag));
}

class Rotation {
 public:
  Rotation() : r_(Eigen::Matrix3d::Identity()) {}

  // Checks orthogonality and det = +1 within 1e-9.
  static Rotation from_matrix(const Eigen::Matrix3d& r);
  static Rotation identity() { return Rotation(); }
  // Rotation by `angle` radians about the given axis.
  static Rotation axis_angle(const Eigen::Vector3d& axis, double angle);

  const Eigen::Matrix3d& matrix() const { return r_; }
  Rotation inverse() const;
  Rotation operator*(const Rotation& o) const;

 private:
  explicit Rotation(const Eigen::Matrix3d& r) : r_(r) {}
  Eigen::Matrix3d r_;
};

struct Translation {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

class Permutation {
 public:
  Permutation() = default;
  // Checks that `map` is a bijection on {0, ..., n-1}.
  static Permutation from_vector(std::vector<int> map);
  static Permutation identity(int n);

  int size() const { return static_cast<int>(map_.size()); }
  int operator[](int i) const { return map_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& map() const { return map_; }
  Permutation inverse() const;
  bool is_identity() const;

  bool operator==(const Permutation&) const = default;

 private:
  explicit Permutation(std::vector<int> map) : map_(std::move(map)) {}
  std::vector<int> map_;
};

Eigen::Vector3d center_of_mass(const Coords& coords);
double max_abs_com(const Coords& coords);

Coords rotate(const Coords& coords, const Rotation& r);
Coords permute_rows(const Coords& coords, const Permutation& p);
Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& m, const Permutation& p);

// Below this CoM magnitude a geometry counts as centred and is returned as is,
// which makes the projection exactly idempotent.
inline constexpr double kCentredSnap = 1e-13;

template <PointSetType G>
G project_zero_com(G g) {
  const Eigen::RowVector3d com = center_of_mass(g.coords).transpose();
  if (com.cwiseAbs().maxCoeff() <= kCentredSnap) return g;
  g.coords.rowwise() -= com;
  return g;
}

template <PointSetType G>
G apply_rigid(G g, const Rotation& r, const Translation& t = {}) {
  g.coords = rotate(g.coords, r);
  g.coords.rowwise() += t.t.transpose();
  return g;
}

// Row i of the result is row p[i] of the input, for coords and features alike.
template <PointSetType G>
G apply_permutation(G g, const Permutation& p) {
  if (p.size() != g.size()) throw Error("permutation size mismatch");
  g.coords = permute_rows(g.coords, p);
  g.features = permute_rows(g.features, p);
  return g;
}

// Proper rotation from a seeded Gaussian 3x3 matrix: QR orthonormalization,
// then one axis flipped if the determinant came out negative.
Rotation random_rotation(std::uint64_t seed);

// Uniformly random permutation of n elements (Fisher-Yates).
Permutation random_permutation(int n, std::uint64_t seed);

Eigen::MatrixXd pairwise_distances(const Coords& coords);

}  // namespace gflow
