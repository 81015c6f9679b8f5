#include "qcmap/lsqc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "qcmap/parallel.hpp"

namespace qcmap {

namespace {

std::atomic<std::uint64_t> g_next_system_id{1};

// Relative normal-equation residual above which the direct solution is refined.
constexpr double kRefineThreshold = 1e-14;

double relative_residual(const SparseMatrixd& N, const VectorXd& u, const VectorXd& rhs) {
  const double denom = rhs.norm();
  const double r = (N * u - rhs).norm();
  return denom > 0 ? r / denom : r;
}

}  // namespace

LsqcSystem assemble(const TriMesh& mesh, const VectorXc& mu_faces, const PinPair& pins,
                    const AssembleOptions& options) {
  const Eigen::Index nf = mesh.n_faces(), nv = mesh.n_vertices();
  if (mu_faces.size() != nf) throw ShapeMismatch("assemble: one Beltrami coefficient per face expected");
  for (Eigen::Index f = 0; f < nf; ++f) {
    const double m = std::abs(mu_faces[f]);
    if (!(m < 1.0)) {
      std::ostringstream os;
      os << "|mu| = " << m << " >= 1 on face " << f;
      throw MuOutOfRange(os.str(), static_cast<int>(f));
    }
  }
  for (const auto& p : pins)
    if (p.vertex < 0 || p.vertex >= nv) throw InputError("assemble: pin vertex out of range");
  if (pins[0].vertex == pins[1].vertex) throw DuplicatePins("assemble: pins must be distinct vertices");

  LsqcSystem sys;
  sys.mesh = &mesh;
  sys.mu_faces = mu_faces;
  sys.pins = pins;
  sys.id = g_next_system_id++;

  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  const auto& d = mesh.double_areas();
  const Complex I(0, 1);

  sys.rows.resize(nf, 3);
  sys.row_scale.resize(nf);
  parallel_for(nf, [&](std::ptrdiff_t f) {
    const Complex mu = mu_faces[f];
    const double scale = options.unscaled_rows ? 1.0 : 1.0 / std::sqrt(d[f]);
    sys.row_scale[f] = scale;
    for (int j = 0; j < 3; ++j) {
      const int a = F(f, (j + 1) % 3), b = F(f, (j + 2) % 3);
      const double dx = V(b, 0) - V(a, 0), dy = V(b, 1) - V(a, 1);
      sys.rows(f, j) = ((1.0 + mu) * dx + I * (1.0 - mu) * dy) * scale;
    }
  });

  sys.free_column.assign(nv, -1);
  for (int v = 0; v < nv; ++v) {
    if (v == pins[0].vertex || v == pins[1].vertex) continue;
    sys.free_column[v] = static_cast<int>(sys.free_vertices.size());
    sys.free_vertices.push_back(v);
  }
  const Eigen::Index nfree = sys.n_free();

  std::vector<Eigen::Triplet<Complex>> mt;
  std::vector<Eigen::Triplet<double>> at;
  mt.reserve(3 * nf);
  at.reserve(12 * nf);
  VectorXc B = VectorXc::Zero(nf);  // -M_p U_p
  for (Eigen::Index f = 0; f < nf; ++f) {
    for (int j = 0; j < 3; ++j) {
      const int v = F(f, j);
      const Complex m = sys.rows(f, j);
      mt.emplace_back(static_cast<int>(f), v, m);
      const int c = sys.free_column[v];
      if (c >= 0) {
        // Explicit zeros are kept so the pattern depends on connectivity only.
        const int r = static_cast<int>(f);
        at.emplace_back(r, c, m.real());
        at.emplace_back(r, c + nfree, -m.imag());
        at.emplace_back(r + nf, c, m.imag());
        at.emplace_back(r + nf, c + nfree, m.real());
      } else {
        const Complex target = v == pins[0].vertex ? pins[0].target : pins[1].target;
        B[f] -= m * target;
      }
    }
  }
  sys.M.resize(nf, nv);
  sys.M.setFromTriplets(mt.begin(), mt.end());
  sys.A.resize(2 * nf, 2 * nfree);
  sys.A.setFromTriplets(at.begin(), at.end());
  sys.b.resize(2 * nf);
  sys.b << B.real(), B.imag();
  return sys;
}

LsqcSystem assemble(const TriMesh& mesh, const VectorXc& mu_faces, const std::vector<Pin>& pins,
                    const AssembleOptions& options) {
  if (pins.size() != 2)
    throw InputError("exactly two pins are supported (" + std::to_string(pins.size()) + " given)");
  return assemble(mesh, mu_faces, PinPair{pins[0], pins[1]}, options);
}

VectorXd NormalFactorization::solve(const VectorXd& rhs) const { return ldlt.solve(rhs); }

MapResult LsqcSolver::solve(const LsqcSystem& sys) {
  if (!sys.mesh) throw MismatchedSystem("solve: system has no mesh");
  const PatternKey key{sys.mesh, sys.mesh->n_faces(), sys.mesh->n_vertices(), sys.pins[0].vertex,
                       sys.pins[1].vertex};

  SparseMatrixd normal = sys.A.transpose() * sys.A;
  normal.makeCompressed();
  if (!cache_ || !(key == key_) || cache_.use_count() > 1) {
    cache_ = std::make_shared<NormalFactorization>();
    cache_->ldlt.analyzePattern(normal);
    key_ = key;
    ++analyses_;
  }
  auto factor = cache_;
  factor->system_id = sys.id;
  factor->normal = std::move(normal);
  factor->ldlt.factorize(factor->normal);
  ++factorizations_;

  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "LSQC solve failed: " << why;
    if (factor->ldlt.info() == Eigen::Success) {
      const auto& D = factor->ldlt.vectorD();
      os << " (pivot range [" << D.minCoeff() << ", " << D.maxCoeff() << "])";
    }
    throw SolverFailure(os.str());
  };
  if (factor->ldlt.info() != Eigen::Success) fail("factorization breakdown");
  if (factor->ldlt.vectorD().minCoeff() <= 0.0) fail("normal matrix is not positive definite");

  const VectorXd rhs = sys.A.transpose() * sys.b;
  VectorXd u = factor->ldlt.solve(rhs);
  MapResult res;
  res.residual_norm = relative_residual(factor->normal, u, rhs);
  if (res.residual_norm > kRefineThreshold) {
    // Conjugate gradients preconditioned by the factorization itself.
    VectorXd r = rhs - factor->normal * u;
    VectorXd z = factor->ldlt.solve(r);
    VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < 10 && res.residual_norm > kRefineThreshold; ++it) {
      const VectorXd Np = factor->normal * p;
      const double pNp = p.dot(Np);
      if (!(pNp > 0.0)) break;
      const double alpha = rz / pNp;
      u += alpha * p;
      r -= alpha * Np;
      z = factor->ldlt.solve(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
      const double prev = res.residual_norm;
      res.residual_norm = relative_residual(factor->normal, u, rhs);
      res.refinement_iterations = it + 1;
      if (res.residual_norm >= prev) break;
    }
  }
  if (!u.allFinite()) fail("non-finite solution");

  const Eigen::Index nfree = sys.n_free();
  res.U.resize(sys.mesh->n_vertices());
  for (Eigen::Index c = 0; c < nfree; ++c) res.U[sys.free_vertices[c]] = Complex(u[c], u[c + nfree]);
  for (const auto& p : sys.pins) res.U[p.vertex] = p.target;
  res.energy = energy(sys, res.U);
  res.flipped_faces = flipped_faces(*sys.mesh, res.U);
  res.system_id = sys.id;
  res.factor = std::move(factor);
  return res;
}

MapResult solve(const LsqcSystem& system) {
  LsqcSolver solver;
  return solver.solve(system);
}

double energy(const LsqcSystem& system, const VectorXc& U) {
  if (U.size() != system.M.cols()) throw ShapeMismatch("energy: vertex count mismatch");
  return (system.M * U).squaredNorm();
}

std::vector<int> flipped_faces(const TriMesh& mesh, const VectorXc& U) {
  std::vector<int> out;
  const auto& F = mesh.faces();
  for (Eigen::Index f = 0; f < F.rows(); ++f)
    if (!(double_area(U[F(f, 0)], U[F(f, 1)], U[F(f, 2)]) > 0.0)) out.push_back(static_cast<int>(f));
  return out;
}

namespace {

std::array<int, 2> farthest_pair_exhaustive(const TriMesh& mesh, const std::vector<int>& ids) {
  std::array<int, 2> best{ids[0], ids[1]};
  double best_d = -1.0;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const double d = std::norm(mesh.vertex(ids[i]) - mesh.vertex(ids[j]));
      if (d > best_d) {
        best_d = d;
        best = {ids[i], ids[j]};
      }
    }
  return best;
}

double cross(const Complex& o, const Complex& a, const Complex& b) {
  return (a.real() - o.real()) * (b.imag() - o.imag()) - (a.imag() - o.imag()) * (b.real() - o.real());
}

std::array<int, 2> farthest_pair_calipers(const TriMesh& mesh, std::vector<int> ids) {
  // Andrew's monotone chain.
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const auto pa = mesh.vertex(a), pb = mesh.vertex(b);
    return pa.real() < pb.real() || (pa.real() == pb.real() && pa.imag() < pb.imag());
  });
  std::vector<int> hull(2 * ids.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    while (k >= 2 && cross(mesh.vertex(hull[k - 2]), mesh.vertex(hull[k - 1]), mesh.vertex(ids[i])) <= 0) --k;
    hull[k++] = ids[i];
  }
  for (std::size_t i = ids.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(mesh.vertex(hull[k - 2]), mesh.vertex(hull[k - 1]), mesh.vertex(ids[i])) <= 0) --k;
    hull[k++] = ids[i];
  }
  hull.resize(k - 1);
  const std::size_t h = hull.size();
  if (h < 3) return {hull[0], hull[h > 1 ? 1 : 0]};

  auto P = [&](std::size_t i) { return mesh.vertex(hull[i % h]); };
  std::array<int, 2> best{hull[0], hull[1]};
  double best_d = -1.0;
  std::size_t j = 1;
  for (std::size_t i = 0; i < h; ++i) {
    while (std::abs(cross(P(i), P(i + 1), P(j + 1))) > std::abs(cross(P(i), P(i + 1), P(j)))) ++j;
    for (std::size_t cand : {i, i + 1}) {
      const double d = std::norm(P(cand) - P(j));
      if (d > best_d) {
        best_d = d;
        best = {hull[cand % h], hull[j % h]};
      }
    }
  }
  return best;
}

}  // namespace

std::array<int, 2> pick_pins(const TriMesh& mesh) {
  std::vector<int> ids;
  for (const auto& loop : mesh.boundary_loops()) ids.insert(ids.end(), loop.begin(), loop.end());
  std::sort(ids.begin(), ids.end());
  if (ids.size() < 2) throw InputError("pick_pins: need at least two boundary vertices");
  auto pair = ids.size() <= 4096 ? farthest_pair_exhaustive(mesh, ids) : farthest_pair_calipers(mesh, ids);
  if (pair[0] > pair[1]) std::swap(pair[0], pair[1]);
  return pair;
}

PinPair identity_pins(const TriMesh& mesh, const std::array<int, 2>& vertices) {
  return {Pin{vertices[0], mesh.vertex(vertices[0])}, Pin{vertices[1], mesh.vertex(vertices[1])}};
}

nlohmann::json report_json(const LsqcSystem& system, const MapResult& result) {
  nlohmann::json pins = nlohmann::json::array();
  for (const auto& p : system.pins) pins.push_back({{"vertex", p.vertex}, {"target", {p.target.real(), p.target.imag()}}});
  return {{"pins", pins},
          {"energy", result.energy},
          {"residual", result.residual_norm},
          {"flipped_count", result.flipped_faces.size()},
          {"flipped_faces", result.flipped_faces}};
}

}  // namespace qcmap
