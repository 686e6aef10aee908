#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "gflow/geometry.hpp"
#include "gflow/random.hpp"

using namespace gflow;

namespace {

Geometry random_geometry(std::uint64_t seed, int n = 6, int d = 3) {
  Rng rng(seed);
  return make_geometry(gaussian_matrix(rng, n, 3), gaussian_matrix(rng, n, d), "r");
}

}  // namespace

TEST_CASE("center_of_mass examples") {
  CHECK(center_of_mass(Coords::Zero(3, 3)).isZero(0.0));
  Coords two(2, 3);
  two << 1, 0, 0, -1, 0, 0;
  CHECK(center_of_mass(two).isZero(0.0));
  Coords axes(3, 3);
  axes << 2, 0, 0, 0, 2, 0, 0, 0, 2;
  const Eigen::Vector3d c = center_of_mass(axes);
  for (int i = 0; i < 3; ++i) CHECK(c(i) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("geometry validation") {
  CHECK_THROWS_AS(make_geometry(Coords(0, 3), Eigen::MatrixXd(0, 2)), Error);
  CHECK_THROWS_AS(make_geometry(Coords::Zero(2, 3), Eigen::MatrixXd::Zero(3, 2)), Error);
  Coords bad = Coords::Zero(2, 3);
  bad(1, 2) = std::nan("");
  CHECK_THROWS_AS(make_geometry(bad, Eigen::MatrixXd::Zero(2, 1)), Error);
  Eigen::MatrixXd inf = Eigen::MatrixXd::Zero(2, 1);
  inf(0, 0) = INFINITY;
  CHECK_THROWS_AS(make_geometry(Coords::Zero(2, 3), inf), Error);
}

TEST_CASE("project_zero_com") {
  SUBCASE("shift by the centre") {
    Geometry g = make_geometry(Coords::Ones(4, 3), Eigen::MatrixXd::Identity(4, 2));
    g.coords.row(0) << 2, 2, 2;
    g.coords.row(1) << 0, 0, 0;
    const Geometry out = project_zero_com(g);
    CHECK((out.coords - (g.coords.rowwise() - Eigen::RowVector3d(1, 1, 1))).isZero(0.0));
    CHECK(out.features == g.features);
  }
  SUBCASE("random geometry, seed 7") {
    const Geometry out = project_zero_com(random_geometry(7));
    CHECK(max_abs_com(out.coords) <= 1e-12);
  }
  SUBCASE("idempotent and commutes with permutations") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const Geometry g = random_geometry(s, 2 + static_cast<int>(s % 7));
      const Geometry once = project_zero_com(g);
      CHECK(project_zero_com(once) == once);
      const Permutation p = random_permutation(static_cast<int>(g.size()), s + 100);
      const Geometry a = project_zero_com(apply_permutation(g, p));
      const Geometry b = apply_permutation(once, p);
      CHECK((a.coords - b.coords).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK(a.features == b.features);
    }
  }
}

TEST_CASE("apply_rigid") {
  const Geometry g = random_geometry(3);
  CHECK(apply_rigid(g, Rotation::identity(), Translation{}) == g);

  const Rotation rz = Rotation::axis_angle(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2);
  Geometry unit = make_geometry(Coords(1, 3), Eigen::MatrixXd::Ones(1, 1));
  unit.coords << 1, 0, 0;
  const Geometry turned = apply_rigid(unit, rz);
  CHECK(std::abs(turned.coords(0, 0)) <= 1e-15);
  CHECK(turned.coords(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(turned.coords(0, 2)) <= 1e-15);

  for (std::uint64_t s = 0; s < 50; ++s) {
    const Geometry h = random_geometry(s);
    Translation t;
    t.t = Eigen::Vector3d(0.3 * s, -1.0, 2.0);
    const Geometry moved = apply_rigid(h, random_rotation(s), t);
    CHECK((pairwise_distances(moved.coords) - pairwise_distances(h.coords)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(moved.features == h.features);
    const Geometry centred = project_zero_com(h);
    CHECK(max_abs_com(apply_rigid(centred, random_rotation(s + 1)).coords) <= 1e-12);
  }
}

TEST_CASE("apply_permutation") {
  const Geometry g = random_geometry(11, 5);
  CHECK(apply_permutation(g, Permutation::identity(5)) == g);
  const Permutation p = random_permutation(5, 4);
  CHECK(apply_permutation(apply_permutation(g, p), p.inverse()) == g);
  CHECK_THROWS_WITH_AS(apply_permutation(g, Permutation::identity(4)), "permutation size mismatch", Error);

  const Geometry two = random_geometry(12, 2);
  const Geometry swapped = apply_permutation(two, Permutation::from_vector({1, 0}));
  CHECK(swapped.coords.row(0) == two.coords.row(1));
  CHECK(swapped.coords.row(1) == two.coords.row(0));
  CHECK(swapped.features.row(0) == two.features.row(1));
  CHECK(swapped.features.row(1) == two.features.row(0));

  SUBCASE("multiset of rows preserved exactly") {
    const Geometry big = random_geometry(13, 8, 2);
    const Geometry out = apply_permutation(big, random_permutation(8, 9));
    auto rows = [](const Geometry& x) {
      std::vector<std::vector<double>> r;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        std::vector<double> row;
        for (int c = 0; c < 3; ++c) row.push_back(x.coords(i, c));
        for (Eigen::Index c = 0; c < x.feature_dim(); ++c) row.push_back(x.features(i, c));
        r.push_back(row);
      }
      std::sort(r.begin(), r.end());
      return r;
    };
    CHECK(rows(out) == rows(big));
  }
}

TEST_CASE("permutation contract") {
  CHECK_THROWS_AS(Permutation::from_vector({0, 0, 1}), Error);
  CHECK_THROWS_AS(Permutation::from_vector({0, 3}), Error);
  CHECK_THROWS_AS(Permutation::from_vector({-1, 0}), Error);
  const Permutation p = random_permutation(9, 5);
  std::vector<int> sorted = p.map();
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 9; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  CHECK(random_permutation(9, 5) == p);
}

TEST_CASE("random_rotation") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::Matrix3d r = random_rotation(s).matrix();
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() <= 1e-9);
    CHECK(std::abs(r.determinant() - 1.0) <= 1e-9);
  }
  CHECK(random_rotation(42).matrix() == random_rotation(42).matrix());
  CHECK((random_rotation(1).matrix() - random_rotation(2).matrix()).norm() > 0.0);
}

TEST_CASE("rotation contract") {
  Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
  reflect(2, 2) = -1.0;
  CHECK_THROWS_AS(Rotation::from_matrix(reflect), Error);
  CHECK_THROWS_AS(Rotation::from_matrix(2.0 * Eigen::Matrix3d::Identity()), Error);
  const Rotation r = random_rotation(8);
  CHECK(((r * r.inverse()).matrix() - Eigen::Matrix3d::Identity()).norm() <= 1e-12);
}
