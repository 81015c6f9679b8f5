#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "qcmap/energies.hpp"
#include "qcmap/generators.hpp"
#include "qcmap/mesh.hpp"
#include "test_util.hpp"

using namespace qcmap;
using qcmap::test::unit_square;
using qcmap::test::unit_triangle;

namespace {

// Barycentric coordinates from signed sub-triangle areas; independent of the edge-basis solve.
Eigen::Vector3d area_ratio_bary(const TriMesh& m, int f, const Eigen::Vector2d& p) {
  const Complex z(p.x(), p.y());
  const Complex a = m.vertex(m.faces()(f, 0)), b = m.vertex(m.faces()(f, 1)), c = m.vertex(m.faces()(f, 2));
  const double d = double_area(a, b, c);
  return {double_area(z, b, c) / d, double_area(a, z, c) / d, double_area(a, b, z) / d};
}

BaryLocation brute_locate(const TriMesh& m, const Eigen::Vector2d& p) {
  for (int f = 0; f < m.n_faces(); ++f) {
    const auto l = area_ratio_bary(m, f, p);
    if (l.minCoeff() >= -kContainTol) return {f, l};
  }
  BaryLocation best;
  double s = 1e300;
  for (int f = 0; f < m.n_faces(); ++f) {
    const auto l = area_ratio_bary(m, f, p);
    if (l.cwiseAbs().sum() < s) {
      s = l.cwiseAbs().sum();
      best = {f, l};
    }
  }
  return best;
}

}  // namespace

TEST_CASE("validation: orientation repair, dangling and degenerate faces") {
  Points2d V(3, 2);
  V << 0, 0, 1, 0, 0, 1;
  Faces F(1, 3);
  F << 0, 2, 1;
  TriMesh m(V, F);
  CHECK(m.reoriented());
  CHECK(m.faces()(0, 1) == 1);
  CHECK(m.double_areas()[0] == doctest::Approx(1.0));

  Points2d W(6, 2);
  W << 0, 0, 1, 0, 0, 1, 5, 5, 6, 5, 5, 6;
  Faces G(2, 3);
  G << 0, 1, 2, 3, 4, 5;
  CHECK_THROWS_AS(TriMesh(W, G), ValidationError);
  const auto rep = TriMesh::validate(W, G);
  CHECK(std::any_of(rep.issues.begin(), rep.issues.end(), [](const auto& s) { return s.find("dangling") != std::string::npos; }));

  Points2d D(3, 2);
  D << 0, 0, 1, 0, 2, 1e-9;
  Faces H(1, 3);
  H << 0, 1, 2;
  CHECK_NOTHROW(TriMesh(D, H));
  D(2, 1) = 1e-16;
  CHECK_THROWS_AS(TriMesh(D, H), ValidationError);

  // Mixed orientation is corruption, not an exporter convention.
  Points2d S(4, 2);
  S << 0, 0, 1, 0, 1, 1, 0, 1;
  Faces M(2, 3);
  M << 0, 1, 2, 0, 3, 2;
  CHECK_THROWS_AS(TriMesh(S, M), ValidationError);

  // Bowtie: two triangles sharing only a vertex.
  Points2d B(5, 2);
  B << 0, 0, 1, 0, 0, 1, -1, 0, 0, -1;
  Faces BF(2, 3);
  BF << 0, 1, 2, 0, 3, 4;
  CHECK_THROWS_AS(TriMesh(B, BF), ValidationError);
}

TEST_CASE("boundary loops") {
  CHECK(boundary(unit_triangle()) == std::vector<std::vector<int>>{{0, 1, 2}});
  CHECK(boundary(unit_square()) == std::vector<std::vector<int>>{{0, 1, 2, 3}});

  const auto ann = gen::annulus_mesh(4, 24, 0.5, 1.0);
  const auto& loops = ann.boundary_loops();
  REQUIRE(loops.size() == 2);

  auto loop_area = [&](const std::vector<int>& l) {
    VectorXc z(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) z[i] = ann.vertex(l[i]);
    return green_area(z);
  };
  CHECK(loop_area(loops[0]) > 0);
  CHECK(loop_area(loops[1]) < 0);

  // Edge-count oracle: boundary edges are the undirected edges used by exactly one face.
  std::map<std::pair<int, int>, int> count;
  for (int f = 0; f < ann.n_faces(); ++f)
    for (int k = 0; k < 3; ++k) {
      int a = ann.faces()(f, k), b = ann.faces()(f, (k + 1) % 3);
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  std::set<std::pair<int, int>> oracle, traced;
  for (const auto& [e, c] : count)
    if (c == 1) oracle.insert(e);
  for (const auto& l : loops)
    for (std::size_t i = 0; i < l.size(); ++i) {
      const int a = l[i], b = l[(i + 1) % l.size()];
      traced.insert({std::min(a, b), std::max(a, b)});
    }
  CHECK(oracle == traced);
}

TEST_CASE("area of faces equals Green's-theorem boundary area") {
  gen::Rng rng(3);
  for (const auto& m : {gen::disk_mesh(6, 0.3, rng), gen::annulus_mesh(5, 30, 0.3, 1.2), gen::fan_polygon(17, rng),
                        gen::grid_mesh(4, 7, -1, 0, 2, 1)}) {
    const double faces = m.double_areas().sum() / 2;
    const double green = green_area(m, m.complex_vertices());
    CHECK(std::abs(faces - green) <= 1e-12 * std::abs(faces));
  }
}

TEST_CASE("locate: vertices, centroids and the brute-force minimizer") {
  gen::Rng rng(11);
  const auto m = gen::disk_mesh(5, 0.35, rng);
  for (int v = 0; v < m.n_vertices(); ++v) {
    const auto loc = locate(m, m.vertex(v));
    int corner = -1;
    for (int k = 0; k < 3; ++k)
      if (m.faces()(loc.face, k) == v) corner = k;
    REQUIRE(corner >= 0);
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[corner] = 1.0;
    CHECK((loc.lambda - e).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (int f = 0; f < m.n_faces(); ++f) {
    const Complex c = (m.vertex(m.faces()(f, 0)) + m.vertex(m.faces()(f, 1)) + m.vertex(m.faces()(f, 2))) / 3.0;
    const auto loc = locate(m, c);
    CHECK(loc.face == f);
    CHECK((loc.lambda.array() - 1.0 / 3).abs().maxCoeff() < 1e-12);
  }
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 300; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    const auto got = locate(m, p);
    const auto want = brute_locate(m, p);
    CHECK(got.face == want.face);
    CHECK((got.lambda - want.lambda).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(got.lambda.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("locate: exterior point near an edge picks the smallest |lambda| sum") {
  const auto sq = unit_square();
  const auto loc = locate(sq, Eigen::Vector2d(0.5, -0.1));
  const auto want = brute_locate(sq, Eigen::Vector2d(0.5, -0.1));
  CHECK(loc.face == want.face);
  CHECK(loc.lambda.minCoeff() < 0.0);
  CHECK(loc.lambda.sum() == doctest::Approx(1.0));
}

TEST_CASE("build_interp") {
  gen::Rng rng(5);
  const auto m = gen::disk_mesh(4, 0.3, rng);
  const auto I = build_interp(m, m.vertices());
  for (int r = 0; r < I.rows(); ++r) {
    CHECK(I.row(r).nonZeros() == 1);
    CHECK(I.coeff(r, r) == 1.0);
  }

  const auto tri = unit_triangle();
  Points2d t(2, 2);
  t << 1.0 / 3, 1.0 / 3, 2.0, 2.0;
  const auto R = build_interp(tri, t);
  for (int k = 0; k < 3; ++k) CHECK(R.coeff(0, k) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  // (2,2) = -3 v0 + 2 v1 + 2 v2
  CHECK(R.coeff(1, 0) == doctest::Approx(-3.0));
  CHECK(R.coeff(1, 1) == doctest::Approx(2.0));
  CHECK(R.coeff(1, 2) == doctest::Approx(2.0));

  Points2d targets(200, 2);
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (int i = 0; i < targets.rows(); ++i) targets.row(i) << u(rng), u(rng);
  const auto Rr = build_interp(m, targets);
  const VectorXd sums = Rr * VectorXd::Ones(m.n_vertices());
  CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
  // Reproduces linear functions, inside and outside.
  const VectorXd lin = 2.0 * m.vertices().col(0) - 0.5 * m.vertices().col(1);
  const VectorXd got = Rr * lin;
  const VectorXd want = 2.0 * targets.col(0) - 0.5 * targets.col(1);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("split_face") {
  const auto tri = unit_triangle();
  auto s = split_face(tri, 0, Eigen::Vector3d::Constant(1.0 / 3));
  CHECK(s.vertex == 3);
  CHECK(s.mesh.vertex(3).real() == doctest::Approx(1.0 / 3));
  CHECK(s.mesh.vertex(3).imag() == doctest::Approx(1.0 / 3));
  REQUIRE(s.mesh.n_faces() == 3);
  for (int f = 0; f < 3; ++f) CHECK(s.mesh.double_areas()[f] == doctest::Approx(1.0 / 3));

  const Eigen::Vector3d alpha(0.5, 0.25, 0.25);
  s = split_face(tri, 0, alpha);
  for (int f = 0; f < 3; ++f) {
    const auto& F = s.mesh.faces();
    const Complex a = s.mesh.vertex(F(f, 0)), b = s.mesh.vertex(F(f, 1)), c = s.mesh.vertex(F(f, 2));
    const double shoelace = (a.real() * b.imag() - b.real() * a.imag()) + (b.real() * c.imag() - c.real() * b.imag()) +
                            (c.real() * a.imag() - a.real() * c.imag());
    CHECK(s.mesh.double_areas()[f] == doctest::Approx(shoelace).epsilon(1e-14));
    // The child omitting corner i has area alpha_i of the parent.
    CHECK(s.mesh.double_areas()[f] == doctest::Approx(alpha[f]).epsilon(1e-14));
  }

  gen::Rng rng(2);
  const auto disk = gen::disk_mesh(4, 0.2, rng);
  const int interior_face = 0;  // incident to the centre vertex
  auto big = split_face(disk, interior_face, Eigen::Vector3d(0.2, 0.3, 0.5));
  CHECK(big.mesh.n_faces() == disk.n_faces() + 2);
  CHECK(big.mesh.boundary_loops() == disk.boundary_loops());
  CHECK(std::abs(big.mesh.double_areas().sum() - disk.double_areas().sum()) <= 1e-12 * disk.double_areas().sum());
  const double parent = disk.double_areas()[interior_face];
  const double children = big.mesh.double_areas()[interior_face] + big.mesh.double_areas()[disk.n_faces()] +
                          big.mesh.double_areas()[disk.n_faces() + 1];
  CHECK(std::abs(children - parent) <= 1e-12 * parent);

  CHECK_THROWS_AS(split_face(tri, 0, Eigen::Vector3d(0.5, 0.5, 0.0)), InvalidWeights);
  CHECK_THROWS_AS(split_face(tri, 0, Eigen::Vector3d(0.5, 0.5, 0.5)), InvalidWeights);
}
