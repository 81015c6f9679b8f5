#include <Eigen/Dense>

#include "doctest.h"
#include "qcmap/beltrami.hpp"
#include "qcmap/generators.hpp"
#include "qcmap/lsqc.hpp"
#include "qcmap/proptest.hpp"
#include "test_util.hpp"

using namespace qcmap;
using qcmap::test::unit_square;
using qcmap::test::unit_triangle;

namespace {

// Dense M straight from the W formulas.
Eigen::MatrixXcd dense_m(const TriMesh& m, const VectorXc& mu) {
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(m.n_faces(), m.n_vertices());
  const Complex I(0, 1);
  for (int f = 0; f < m.n_faces(); ++f) {
    const int a = m.faces()(f, 0), b = m.faces()(f, 1), c = m.faces()(f, 2);
    const Complex p1 = m.vertex(a), p2 = m.vertex(b), p3 = m.vertex(c);
    const double d = (p1.real() * p2.imag() - p1.imag() * p2.real()) + (p2.real() * p3.imag() - p2.imag() * p3.real()) +
                     (p3.real() * p1.imag() - p3.imag() * p1.real());
    const Complex u = 1.0 + mu[f], v = 1.0 - mu[f];
    M(f, a) = (u * (p3.real() - p2.real()) + I * v * (p3.imag() - p2.imag())) / std::sqrt(d);
    M(f, b) = (u * (p1.real() - p3.real()) + I * v * (p1.imag() - p3.imag())) / std::sqrt(d);
    M(f, c) = (u * (p2.real() - p1.real()) + I * v * (p2.imag() - p1.imag())) / std::sqrt(d);
  }
  return M;
}

}  // namespace

TEST_CASE("assemble: W coefficients on the unit triangle") {
  const auto tri = unit_triangle();
  const auto sys = assemble(tri, VectorXc::Zero(1), identity_pins(tri, {0, 1}));
  CHECK(std::abs(sys.rows(0, 0) - Complex(-1, 1)) < 1e-15);
  CHECK(std::abs(sys.rows(0, 1) - Complex(0, -1)) < 1e-15);
  CHECK(std::abs(sys.rows(0, 2) - Complex(1, 0)) < 1e-15);
  CHECK(std::abs(sys.rows.row(0).sum()) < 1e-15);
  CHECK(sys.M.nonZeros() == 3);
  CHECK(sys.n_free() == 1);
  CHECK(sys.A.rows() == 2);
  CHECK(sys.A.cols() == 2);
}

TEST_CASE("assemble: preconditions") {
  const auto tri = unit_triangle();
  VectorXc mu(1);
  mu << 1.0;
  try {
    assemble(tri, mu, identity_pins(tri, {0, 1}));
    FAIL("expected MuOutOfRange");
  } catch (const MuOutOfRange& e) {
    CHECK(e.face == 0);
  }
  mu << Complex(0.6, 0.8);
  CHECK_THROWS_AS(assemble(tri, mu, identity_pins(tri, {0, 1})), MuOutOfRange);
  mu << Complex(std::nan(""), 0);
  CHECK_THROWS_AS(assemble(tri, mu, identity_pins(tri, {0, 1})), MuOutOfRange);
  mu << 0.0;
  CHECK_THROWS_AS(assemble(tri, mu, identity_pins(tri, {1, 1})), DuplicatePins);
  CHECK_THROWS_AS(assemble(tri, mu, std::vector<Pin>{{0, 0.0}, {1, 1.0}, {2, 2.0}}), InputError);
  CHECK_THROWS_AS(assemble(tri, mu, identity_pins(tri, {0, 7})), InputError);
  CHECK_THROWS_AS(assemble(tri, VectorXc::Zero(2), identity_pins(tri, {0, 1})), ShapeMismatch);
}

TEST_CASE("assemble: matches the dense W-formula oracle, rows sum to zero") {
  gen::Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = gen::disk_mesh(4, 0.35, rng);
    const VectorXc mu = trial == 0 ? VectorXc::Zero(m.n_faces()) : gen::random_face_mu(m, 0.9, rng);
    const auto sys = assemble(m, mu, identity_pins(m, pick_pins(m)));
    const Eigen::MatrixXcd M(sys.M);
    CHECK((M - dense_m(m, mu)).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((sys.M * VectorXc::Ones(m.n_vertices())).cwiseAbs().maxCoeff() < 1e-12);
    for (int f = 0; f < m.n_faces(); ++f) CHECK((M.row(f).array() != Complex(0)).count() == 3);
  }
}

TEST_CASE("solve: single-triangle examples") {
  const auto tri = unit_triangle();
  auto res = solve(assemble(tri, VectorXc::Zero(1), PinPair{Pin{0, 0.0}, Pin{1, 1.0}}));
  CHECK(std::abs(res.U[2] - Complex(0, 1)) < 1e-14);
  CHECK(res.energy < 1e-28);
  CHECK(res.U[0] == Complex(0, 0));
  CHECK(res.U[1] == Complex(1, 0));

  VectorXc mu(1);
  mu << 1.0 / 3;
  res = solve(assemble(tri, mu, PinPair{Pin{0, 0.0}, Pin{1, 2.0}}));
  CHECK(std::abs(res.U[2] - Complex(0, 1)) < 1e-14);
  CHECK(res.flipped_faces.empty());
}

TEST_CASE("solve: exact Beltrami coefficient on fan polygons") {
  gen::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = gen::fan_polygon(10 + trial * 2, rng);
    VectorXc mu = gen::random_face_mu(m, 0.8, rng);
    const auto sys = assemble(m, mu, identity_pins(m, pick_pins(m)));
    const auto res = solve(sys);
    CHECK(res.energy < 1e-18);
    CHECK(energy(sys, res.U) < 1e-18);
    CHECK((bc_from_map(m, res.U).mu - mu).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("energy: identity map") {
  gen::Rng rng(9);
  const auto m = gen::disk_mesh(4, 0.3, rng);
  const VectorXc z = m.complex_vertices();
  const auto pins = identity_pins(m, pick_pins(m));
  CHECK(energy(assemble(m, VectorXc::Zero(m.n_faces()), pins), z) < 1e-28);
  const VectorXc half = VectorXc::Constant(m.n_faces(), 0.5);
  const double e = energy(assemble(m, half, pins), z);
  CHECK(e > 0);
  CHECK(e == doctest::Approx((dense_m(m, half) * z).squaredNorm()).epsilon(1e-12));
  // mu = 0 on a mesh with interior vertices: the identity is the conformal solution.
  const auto res = solve(assemble(m, VectorXc::Zero(m.n_faces()), pins));
  CHECK(test::max_abs_diff(res.U, z) < 1e-12);
}

TEST_CASE("solve: normal operator is positive definite and the solution unique") {
  gen::Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = gen::disk_mesh(3 + trial % 3, 0.3, rng);
    const auto sys = assemble(m, gen::random_face_mu(m, 0.9, rng), identity_pins(m, pick_pins(m)));
    const Eigen::MatrixXd A(sys.A);
    const VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A.transpose() * A).eigenvalues();
    CHECK(ev.minCoeff() > 1e-10 * ev.maxCoeff());
    const VectorXd u = A.colPivHouseholderQr().solve(sys.b);
    const auto res = solve(sys);
    for (Eigen::Index c = 0; c < sys.n_free(); ++c)
      CHECK(std::abs(res.U[sys.free_vertices[c]] - Complex(u[c], u[c + sys.n_free()])) < 1e-10);
  }
}

TEST_CASE("LsqcSolver reuses the symbolic analysis") {
  gen::Rng rng(11);
  const auto m = gen::disk_mesh(5, 0.3, rng);
  const auto pins = identity_pins(m, pick_pins(m));
  LsqcSolver solver;
  for (int i = 0; i < 4; ++i) solver.solve(assemble(m, gen::random_face_mu(m, 0.5, rng), pins));
  CHECK(solver.analyses() == 1);
  CHECK(solver.factorizations() == 4);

  // A result still holding the factorization forces a fresh one rather than mutation.
  const auto sys1 = assemble(m, gen::random_face_mu(m, 0.5, rng), pins);
  const auto keep = solver.solve(sys1);
  const VectorXc before = keep.U;
  const auto other = solver.solve(assemble(m, gen::random_face_mu(m, 0.5, rng), pins));
  CHECK(keep.factor != other.factor);
  CHECK(keep.factor->system_id == sys1.id);
  const auto again = solve(sys1);
  CHECK(test::max_abs_diff(again.U, before) < 1e-13);
}

TEST_CASE("pick_pins") {
  const auto tri = [] {
    Points2d V(3, 2);
    V << 0, 0, 3, 0, 0, 1;
    Faces F(1, 3);
    F << 0, 1, 2;
    return TriMesh(V, F);
  }();
  CHECK(pick_pins(tri) == std::array<int, 2>{1, 2});
  const auto sq = pick_pins(unit_square());
  CHECK(std::abs(std::abs(unit_square().vertex(sq[0]) - unit_square().vertex(sq[1])) - std::sqrt(2.0)) < 1e-15);

  const auto disk = gen::disk_mesh(11);  // 66 boundary vertices
  const auto p = pick_pins(disk);
  CHECK(std::abs(disk.vertex(p[0]) - disk.vertex(p[1])) >= 1.99);

  // Large boundary: hull + calipers gives the exhaustive diameter.
  const auto ann = gen::annulus_mesh(2, 5000, 0.9, 1.0);
  const auto q = pick_pins(ann);
  double best = 0;
  for (int i = 5000; i < 10000; ++i)
    for (int j = i + 1; j < 10000; j += 1) best = std::max(best, std::abs(ann.vertex(i) - ann.vertex(j)));
  CHECK(std::abs(ann.vertex(q[0]) - ann.vertex(q[1])) == doctest::Approx(best).epsilon(1e-15));
}

TEST_CASE("apply_similarity") {
  VectorXc U(2);
  U << 1.0, Complex(0, 1);
  CHECK(apply_similarity(U, 0.0, 1.0, 0.0) == U);
  const auto g = apply_similarity(U, M_PI / 2, 2.0, 1.0);
  CHECK(std::abs(g[0] - Complex(1, 2)) < 1e-15);
  CHECK(std::abs(g[1] - Complex(-1, 0)) < 1e-15);
  CHECK_THROWS_AS(apply_similarity(U, 0.0, 0.0, 0.0), InputError);

  gen::Rng rng(12);
  const auto m = gen::disk_mesh(4, 0.3, rng);
  const VectorXc f = gen::random_homeomorphism(m, rng);
  const auto before = bc_from_map(m, f).mu;
  const auto after = bc_from_map(m, apply_similarity(f, 1.3, 0.4, Complex(2, -1))).mu;
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("report_json") {
  const auto tri = unit_triangle();
  const auto sys = assemble(tri, VectorXc::Zero(1), PinPair{Pin{0, 0.0}, Pin{1, 1.0}});
  const auto j = report_json(sys, solve(sys));
  CHECK(j["pins"].size() == 2);
  CHECK(j["flipped_count"] == 0);
  CHECK(j["energy"].get<double>() < 1e-28);
  CHECK(j.contains("residual"));
}

TEST_CASE("property suites, small runs") {
  for (const auto& name : prop::suite_names()) {
    prop::SuiteOptions opt;
    opt.trials = name == "adjoint" ? 3 : 10;
    opt.max_rings = 10;
    const auto r = prop::run_suite(name, opt);
    INFO(name << " worst " << r.worst);
    CHECK(r.passed());
  }
  prop::SuiteOptions broken;
  broken.trials = 10;
  broken.unscaled_rows = true;
  CHECK_FALSE(prop::run_suite("resolution", broken).passed());
  CHECK_THROWS_AS(prop::run_suite("nope", broken), InputError);
}

TEST_CASE("property suite trials replay from their seed") {
  prop::SuiteOptions opt;
  opt.seed = 5;
  opt.trials = 3;
  const auto all = prop::run_suite("similarity", opt);
  opt.trials = 1;
  opt.seed = prop::trial_seed(5, 2);
  const auto one = prop::run_suite("similarity", opt);
  CHECK(one.worst <= all.worst);
}
