#include "gflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/QR>

#include "gflow/random.hpp"

namespace gflow {

void validate(const PointSet& g) {
  if (g.coords.rows() < 1) throw Error("geometry must contain at least one point");
  if (g.features.rows() != g.coords.rows())
    throw Error("coords and features row counts differ");
  if (!g.coords.allFinite() || !g.features.allFinite())
    throw Error("geometry contains non-finite entries");
}

Geometry make_geometry(Coords coords, Features features, std::string tag) {
  Geometry g;
  g.coords = std::move(coords);
  g.features = std::move(features);
  g.tag = std::move(tag);
  validate(g);
  return g;
}

LatentGeometry make_latent(Coords coords, Features features) {
  LatentGeometry z;
  z.coords = std::move(coords);
  z.features = std::move(features);
  validate(z);
  return z;
}

Rotation Rotation::from_matrix(const Eigen::Matrix3d& r) {
  if (!r.allFinite()) throw Error("rotation has non-finite entries");
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > 1e-9)
    throw Error("rotation matrix is not orthogonal");
  if (std::abs(r.determinant() - 1.0) > 1e-9) throw Error("rotation matrix has det != +1");
  return Rotation(r);
}

Rotation Rotation::axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
}

Rotation Rotation::inverse() const { return Rotation(r_.transpose()); }

Rotation Rotation::operator*(const Rotation& o) const { return Rotation(r_ * o.r_); }

Permutation Permutation::from_vector(std::vector<int> map) {
  const int n = static_cast<int>(map.size());
  std::vector<char> seen(map.size(), 0);
  for (int v : map) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)])
      throw Error("permutation is not a bijection");
    seen[static_cast<std::size_t>(v)] = 1;
  }
  return Permutation(std::move(map));
}

Permutation Permutation::identity(int n) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) inv[static_cast<std::size_t>(map_[i])] = static_cast<int>(i);
  return Permutation(std::move(inv));
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < map_.size(); ++i)
    if (map_[i] != static_cast<int>(i)) return false;
  return true;
}

Eigen::Vector3d center_of_mass(const Coords& coords) {
  return coords.colwise().mean().transpose();
}

double max_abs_com(const Coords& coords) {
  return center_of_mass(coords).cwiseAbs().maxCoeff();
}

Coords rotate(const Coords& coords, const Rotation& r) {
  return coords * r.matrix().transpose();
}

Coords permute_rows(const Coords& coords, const Permutation& p) {
  Coords out(coords.rows(), 3);
  for (int i = 0; i < p.size(); ++i) out.row(i) = coords.row(p[i]);
  return out;
}

Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& m, const Permutation& p) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (int i = 0; i < p.size(); ++i) out.row(i) = m.row(p[i]);
  return out;
}

Rotation random_rotation(std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Matrix3d a = gaussian_matrix(rng, 3, 3);
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(a);
  Eigen::Matrix3d q = qr.householderQ();
  // Fix the QR sign ambiguity so the result is a deterministic function of `a`.
  const Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < 3; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  if (q.determinant() < 0) q.col(2) = -q.col(2);
  return Rotation::from_matrix(q);
}

Permutation random_permutation(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(std::uniform_int_distribution<int>(0, i)(rng));
    std::swap(m[static_cast<std::size_t>(i)], m[static_cast<std::size_t>(j)]);
  }
  return Permutation::from_vector(std::move(m));
}

Eigen::MatrixXd pairwise_distances(const Coords& coords) {
  const Eigen::Index n = coords.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (coords.row(i) - coords.row(j)).norm();
  return d;
}

}  // namespace gflow
