#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include <Eigen/LU>

#include "gflow/alignment.hpp"
#include "gflow/random.hpp"

using namespace gflow;

namespace {

PointSet cloud(Rng& rng, int n, int d) {
  PointSet g;
  g.coords = gaussian_matrix(rng, n, 3);
  g.coords.rowwise() -= g.coords.colwise().mean();
  g.features = gaussian_matrix(rng, n, d);
  return g;
}

// Exhaustive assignment oracle.
double enumerate(const Eigen::MatrixXd& c) {
  std::vector<int> p(static_cast<std::size_t>(c.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += c(p[i], static_cast<Eigen::Index>(i));
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

double rotation_cost(const Coords& target, const Coords& ref, const Eigen::Matrix3d& r) {
  return (target * r.transpose() - ref).squaredNorm();
}

}  // namespace

TEST_CASE("cost_matrix examples") {
  Rng rng(1);
  const PointSet z = cloud(rng, 5, 2);
  const CostMatrix same = cost_matrix(z, z, 0.5);
  CHECK(same.m.diagonal().isZero(0.0));
  CHECK((same.m.array() >= 0.0).all());

  PointSet other = z;
  other.features = gaussian_matrix(rng, 5, 2);
  CHECK(cost_matrix(z, other, 1.0).m == cost_matrix(z, z, 1.0).m);

  PointSet a, b;
  a.coords = Coords::Zero(2, 3);
  a.coords(1, 0) = 1.0;
  b.coords = Coords::Zero(2, 3);
  b.coords(0, 0) = 1.0;
  a.features = b.features = Eigen::MatrixXd::Ones(2, 1);
  Eigen::Matrix2d expect;
  expect << 1, 0, 0, 1;
  CHECK(cost_matrix(a, b, 1.0).m == Eigen::MatrixXd(expect));

  CHECK_THROWS_AS(cost_matrix(z, cloud(rng, 4, 2), 0.5), Error);
  CHECK_THROWS_AS(cost_matrix(z, z, 1.5), Error);
}

TEST_CASE("hungarian examples") {
  const CostMatrix diag{Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4)};
  CHECK(hungarian(diag).is_identity());
  Eigen::MatrixXd anti(2, 2);
  anti << 1, 0, 0, 1;
  const Permutation swap = hungarian(CostMatrix{anti});
  CHECK(swap == Permutation::from_vector({1, 0}));
  CHECK(assignment_cost(CostMatrix{anti}, swap) == 0.0);
}

TEST_CASE("hungarian equals enumeration on 7x7 matrices") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const CostMatrix c{gaussian_matrix(rng, 7, 7).cwiseAbs()};
    CHECK(assignment_cost(c, hungarian(c)) == enumerate(c.m));
  }
}

TEST_CASE("hungarian on ties and small sizes") {
  CHECK(hungarian(CostMatrix{Eigen::MatrixXd::Zero(1, 1)}).size() == 1);
  const CostMatrix flat{Eigen::MatrixXd::Constant(5, 5, 2.0)};
  CHECK(assignment_cost(flat, hungarian(flat)) == 10.0);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd m = gaussian_matrix(rng, 6, 6).cwiseAbs().array().round().matrix();
    CHECK(assignment_cost(CostMatrix{m}, hungarian(CostMatrix{m})) == enumerate(m));
  }
}

TEST_CASE("kabsch") {
  Rng rng(3);
  const PointSet z = cloud(rng, 5, 1);
  CHECK((kabsch(z.coords, z.coords).matrix() - Eigen::Matrix3d::Identity()).norm() <= 1e-9);

  const Rotation r0 = random_rotation(17);
  const Rotation r = kabsch(rotate(z.coords, r0), z.coords);
  CHECK((r.matrix() - r0.matrix().transpose()).norm() <= 1e-9);

  SUBCASE("never beaten by random rotations") {
    const PointSet a = cloud(rng, 6, 1), b = cloud(rng, 6, 1);
    const double best = rotation_cost(a.coords, b.coords, kabsch(a.coords, b.coords).matrix());
    for (std::uint64_t s = 0; s < 10000; ++s)
      REQUIRE(best <= rotation_cost(a.coords, b.coords, random_rotation(s).matrix()) + 1e-12);
  }
  SUBCASE("proper on reflected input") {
    Coords mirrored = z.coords;
    mirrored.col(0) *= -1.0;
    const Eigen::Matrix3d m = kabsch(mirrored, z.coords).matrix();
    CHECK(std::abs(m.determinant() - 1.0) <= 1e-9);
  }
  SUBCASE("collinear input still yields a rotation") {
    Coords line = Coords::Zero(4, 3);
    for (int i = 0; i < 4; ++i) line(i, 0) = i - 1.5;
    const Eigen::Matrix3d m = kabsch(line, rotate(line, random_rotation(2))).matrix();
    CHECK((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() <= 1e-9);
    CHECK(std::abs(m.determinant() - 1.0) <= 1e-9);
  }
  Coords off = z.coords;
  off.rowwise() += Eigen::RowVector3d(1, 0, 0);
  CHECK_THROWS_WITH_AS(kabsch(off, z.coords), "kabsch requires zero-CoM inputs", Error);
}

TEST_CASE("solve_omt examples") {
  Rng rng(5);
  const PointSet z0 = cloud(rng, 6, 3);
  const OmtSolution same = solve_omt(z0, z0);
  CHECK(same.cost <= 1e-20);
  CHECK(same.permutation.is_identity());
  CHECK((same.rotation.matrix() - Eigen::Matrix3d::Identity()).norm() <= 1e-9);

  SUBCASE("rigid and permuted copy is recovered by alternation") {
    const PointSet moved = apply_permutation(apply_rigid(z0, random_rotation(21)), random_permutation(6, 22));
    CHECK(solve_omt(moved, z0, 0.5, 10).cost < 1e-8);
  }
  SUBCASE("single pass recovers the copy when features identify atoms") {
    PointSet labelled = z0;
    labelled.features = 3.0 * Eigen::MatrixXd::Identity(6, 6);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const PointSet moved =
          apply_permutation(apply_rigid(labelled, random_rotation(s)), random_permutation(6, s + 50));
      CHECK(solve_omt(moved, labelled, 0.5, 1).cost < 1e-8);
    }
  }

  CHECK_THROWS_AS(solve_omt(z0, cloud(rng, 5, 3)), Error);
  PointSet off = z0;
  off.coords.rowwise() += Eigen::RowVector3d(0, 1, 0);
  CHECK_THROWS_AS(solve_omt(off, z0), Error);
}

TEST_CASE("solve_omt solution is self-consistent") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7;
    const PointSet z1 = cloud(rng, n, 2), z0 = cloud(rng, n, 2);
    for (int it : {1, 5}) {
      const OmtSolution s = solve_omt(z1, z0, 0.5, it);
      const OmtCost recomputed = omt_objective(z1, z0, s.rotation, s.permutation, 0.5);
      CHECK(std::abs(recomputed.total() - s.cost) <= 1e-9);
      const PointSet expect = apply_permutation(apply_rigid(z1, s.rotation), s.permutation);
      CHECK((expect.coords - s.aligned_target.coords).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(expect.features == s.aligned_target.features);
      const double direct = 0.5 * (s.aligned_target.coords - z0.coords).squaredNorm() +
                            0.5 * (s.aligned_target.features - z0.features).squaredNorm();
      CHECK(std::abs(direct - s.cost) <= 1e-9);
      CHECK(s.cost <= omt_objective(z1, z0, Rotation::identity(), Permutation::identity(n), 0.5).total() + 1e-12);
    }
  }
}

TEST_CASE("solve_omt invariances and monotonicity") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + trial % 5;
    const PointSet z1 = cloud(rng, n, 2), z0 = cloud(rng, n, 2);
    const double base = solve_omt(z1, z0, 0.5, 1).cost;
    const PointSet permuted = apply_permutation(z1, random_permutation(n, static_cast<std::uint64_t>(trial)));
    CHECK(solve_omt(permuted, z0, 0.5, 1).cost == base);
    Translation t;
    t.t = Eigen::Vector3d(1.0, -2.0, 0.5);
    CHECK(std::abs(solve_omt(project_zero_com(apply_rigid(z1, Rotation(), t)), z0, 0.5, 1).cost - base) <= 1e-12);
    double prev = base;
    for (int it : {2, 4, 8, 16}) {
      const double c = solve_omt(z1, z0, 0.5, it).cost;
      CHECK(c <= prev + 1e-12);
      prev = c;
    }
  }
}

TEST_CASE("brute_force_omt") {
  Rng rng(10);
  const PointSet z = cloud(rng, 5, 2);
  CHECK(brute_force_omt(z, z, 0.5).cost <= 1e-20);

  PointSet a, b;
  a.coords = Coords::Zero(2, 3);
  a.coords(0, 0) = -0.5;
  a.coords(1, 0) = 0.5;
  b.coords = a.coords.colwise().reverse();
  a.features = b.features = Eigen::MatrixXd::Ones(2, 1);
  const OracleSolution two = brute_force_omt(a, b, 1.0);
  CHECK(two.cost <= 1e-20);

  for (int trial = 0; trial < 30; ++trial) {
    const PointSet z1 = cloud(rng, 5, 2), z0 = cloud(rng, 5, 2);
    const OracleSolution o = brute_force_omt(z1, z0, 0.5);
    CHECK(o.cost <= solve_omt(z1, z0, 0.5, 1).cost + 1e-9);
    CHECK(o.cost <= solve_omt(z1, z0, 0.5, 10).cost + 1e-9);
    CHECK(std::abs(omt_objective(z1, z0, o.rotation, o.permutation, 0.5).total() - o.cost) <= 1e-9);
  }
  CHECK_THROWS_WITH_AS(brute_force_omt(cloud(rng, 9, 1), cloud(rng, 9, 1), 0.5), "oracle size limit: n must be <= 8", Error);
}

TEST_CASE("brute_force_omt invariant under rigid motion and permutation") {
  Rng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + trial % 4;
    const PointSet z1 = cloud(rng, n, 2), z0 = cloud(rng, n, 2);
    const double base = brute_force_omt(z1, z0, 0.5).cost;
    Translation t;
    t.t = Eigen::Vector3d(gaussian_matrix(rng, 3, 1));
    const PointSet moved = project_zero_com(apply_permutation(
        apply_rigid(z1, random_rotation(rng()), t), random_permutation(n, rng())));
    CHECK(std::abs(brute_force_omt(moved, z0, 0.5).cost - base) <= 1e-8);
  }
}

TEST_CASE("lambda endpoints ignore one modality") {
  Rng rng(14);
  const PointSet z1 = cloud(rng, 5, 2), z0 = cloud(rng, 5, 2);
  PointSet feat = z1;
  feat.features += gaussian_matrix(rng, 5, 2);
  PointSet coord = z1;
  coord.coords += gaussian_matrix(rng, 5, 3);
  coord = project_zero_com(coord);
  CHECK(solve_omt(feat, z0, 1.0, 1).cost == solve_omt(z1, z0, 1.0, 1).cost);
  CHECK(solve_omt(coord, z0, 0.0, 1).cost == solve_omt(z1, z0, 0.0, 1).cost);
  CHECK(brute_force_omt(feat, z0, 1.0).cost == doctest::Approx(brute_force_omt(z1, z0, 1.0).cost).epsilon(1e-12));
  CHECK(brute_force_omt(coord, z0, 0.0).cost == doctest::Approx(brute_force_omt(z1, z0, 0.0).cost).epsilon(1e-12));
}

TEST_CASE("omt solution json") {
  Rng rng(15);
  const PointSet z1 = cloud(rng, 4, 1), z0 = cloud(rng, 4, 1);
  const OmtSolution s = solve_omt(z1, z0);
  const auto j = to_json(s);
  CHECK(j.at("cost").get<double>() == s.cost);
  CHECK(j.at("permutation").get<std::vector<int>>() == s.permutation.map());
}
