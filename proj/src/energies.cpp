#include "qcmap/energies.hpp"

#include <cmath>
#include <limits>

#include "qcmap/beltrami.hpp"

namespace qcmap {

namespace {

// Gradient of d_T = twice the signed area with respect to corner k (complex convention).
Complex double_area_grad(const Complex& prev, const Complex& next) {
  return {next.imag() - prev.imag(), prev.real() - next.real()};
}

double sign(double x) { return (x > 0) - (x < 0); }

}  // namespace

double green_area(const TriMesh& mesh, const VectorXc& pos) {
  double a = 0.0;
  for (const auto& loop : mesh.boundary_loops()) {
    VectorXc z(loop.size());
    for (std::size_t i = 0; i < loop.size(); ++i) z[i] = pos[loop[i]];
    a += green_area(z);
  }
  return a;
}

VectorXc green_area_gradient(const TriMesh& mesh, const VectorXc& pos) {
  VectorXc g = VectorXc::Zero(pos.size());
  for (const auto& loop : mesh.boundary_loops()) {
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Complex prev = pos[loop[(i + n - 1) % n]], next = pos[loop[(i + 1) % n]];
      g[loop[i]] += 0.5 * double_area_grad(prev, next);
    }
  }
  return g;
}

void check_density_problem(const DensityProblem& p) {
  if (!p.mesh) throw InputError("density problem has no mesh");
  if (p.population.size() != p.mesh->n_faces())
    throw InputError("population needs one value per face (" + std::to_string(p.mesh->n_faces()) + " faces, " +
                     std::to_string(p.population.size()) + " values)");
  for (Eigen::Index f = 0; f < p.population.size(); ++f)
    if (!(p.population[f] > 0.0) || !std::isfinite(p.population[f]))
      throw InputError("population must be positive (face " + std::to_string(f) + ")");
  if (!(p.barrier_omega > 0.0) || !(p.barrier_weight >= 0.0)) throw InputError("invalid barrier parameters");
}

EnergyReport density_energy(const DensityProblem& p, const VectorXc& f, double s_tilde) {
  const TriMesh& mesh = *p.mesh;
  if (f.size() != mesh.n_vertices()) throw ShapeMismatch("density_energy: one position per vertex expected");
  const auto& F = mesh.faces();
  const Eigen::Index nf = F.rows();

  VectorXd area(nf), rho(nf);
  EnergyReport rep;
  for (Eigen::Index t = 0; t < nf; ++t) {
    area[t] = 0.5 * double_area(f[F(t, 0)], f[F(t, 1)], f[F(t, 2)]);
    if (!(area[t] > 0.0)) rep.degenerate_faces.push_back(static_cast<int>(t));
    rho[t] = p.population[t] / area[t];
  }
  const double total_pop = p.population.sum();
  const double total_area = green_area(mesh, f);
  const double rho_bar = total_pop / total_area;

  const VectorXd dev = rho.array() - rho_bar;
  const double variance = dev.squaredNorm();
  const double s = std::exp(s_tilde);
  const double barrier = std::max(0.0, s - p.barrier_omega);

  rep.components["variance"] = variance;
  rep.components["barrier"] = barrier;
  rep.total = variance + p.barrier_weight * barrier;
  rep.d_s_tilde = s > p.barrier_omega ? p.barrier_weight * s : 0.0;

  rep.gradient = VectorXc::Zero(f.size());
  for (Eigen::Index t = 0; t < nf; ++t) {
    const double dE_dA = -2.0 * dev[t] * p.population[t] / (area[t] * area[t]);
    for (int k = 0; k < 3; ++k) {
      const Complex prev = f[F(t, (k + 2) % 3)], next = f[F(t, (k + 1) % 3)];
      rep.gradient[F(t, k)] += dE_dA * 0.5 * double_area_grad(prev, next);
    }
  }
  const double dE_dtotal = 2.0 * dev.sum() * total_pop / (total_area * total_area);
  rep.gradient += dE_dtotal * green_area_gradient(mesh, f);
  return rep;
}

DensityStats density_statistics(const TriMesh& mesh, const VectorXd& population, const VectorXc& f) {
  const auto& F = mesh.faces();
  DensityStats st;
  st.density.resize(F.rows());
  for (Eigen::Index t = 0; t < F.rows(); ++t)
    st.density[t] = population[t] / (0.5 * double_area(f[F(t, 0)], f[F(t, 1)], f[F(t, 2)]));
  st.mean_density = population.sum() / green_area(mesh, f);
  const VectorXd normalized = st.density / st.mean_density;
  st.normalized_variance = (normalized.array() - normalized.mean()).square().mean();
  return st;
}

ScalarGrad e_bc(const VectorXc& mu) {
  ScalarGrad out;
  const double n = static_cast<double>(std::max<Eigen::Index>(mu.size(), 1));
  out.value = mu.squaredNorm() / n;
  out.gradient = (2.0 / n) * mu;
  return out;
}

ScalarGrad e_smooth(const TriMesh& mesh, const VectorXc& mu) {
  if (mu.size() != mesh.n_vertices()) throw ShapeMismatch("e_smooth: one value per vertex expected");
  const auto& F = mesh.faces();
  const auto S = gradient_stencil(mesh);
  const auto G = face_gradient(mesh, mu);
  const double n = static_cast<double>(F.rows());
  ScalarGrad out;
  out.gradient = VectorXc::Zero(mu.size());
  for (Eigen::Index t = 0; t < F.rows(); ++t) {
    out.value += std::norm(G(t, 0)) + std::norm(G(t, 1));
    for (int j = 0; j < 3; ++j) out.gradient[F(t, j)] += (2.0 / n) * (S(t, j) * G(t, 0) + S(t, 3 + j) * G(t, 1));
  }
  out.value /= n;
  return out;
}

namespace {

int nearest(const Complex& p, const VectorXc& set) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    const double d = std::norm(p - set[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

ScalarGrad chamfer_fixed(const VectorXc& a, const VectorXc& b, const std::vector<int>& fwd, const std::vector<int>& bwd) {
  ScalarGrad out;
  out.gradient = VectorXc::Zero(a.size());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double s1 = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Complex d = a[i] - b[fwd[i]];
    s1 += std::norm(d);
    out.gradient[i] += (2.0 / na) * d;
  }
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const Complex d = a[bwd[j]] - b[j];
    s2 += std::norm(d);
    out.gradient[bwd[j]] += (2.0 / nb) * d;
  }
  out.value = s1 / na + s2 / nb;
  return out;
}

}  // namespace

ScalarGrad chamfer(const VectorXc& a, const VectorXc& b) {
  if (a.size() == 0 || b.size() == 0) throw EmptyRegion("chamfer: both point sets must be non-empty");
  std::vector<int> fwd(a.size()), bwd(b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) fwd[i] = nearest(a[i], b);
  for (Eigen::Index j = 0; j < b.size(); ++j) bwd[j] = nearest(b[j], a);
  return chamfer_fixed(a, b, fwd, bwd);
}

void check_registration_problem(const RegistrationProblem& p) {
  if (!p.moving || !p.fixed) throw InputError("registration problem needs both meshes");
  if (p.moving_intensity.size() != p.moving->n_vertices())
    throw InputError("moving intensity needs one value per moving vertex");
  if (p.fixed_intensity.size() != p.fixed->n_vertices())
    throw InputError("static intensity needs one value per static vertex");
  if (!p.moving_intensity.allFinite() || !p.fixed_intensity.allFinite()) throw InputError("intensities must be finite");
  for (std::size_t j = 0; j < p.regions.size(); ++j) {
    const auto& r = p.regions[j];
    if (r.moving.empty() || r.target.size() == 0)
      throw EmptyRegion("region pair " + std::to_string(j) + " is empty");
    for (int v : r.moving)
      if (v < 0 || v >= p.moving->n_vertices())
        throw InputError("region pair " + std::to_string(j) + " has a moving index out of range");
    if (!r.target.allFinite()) throw InputError("region pair " + std::to_string(j) + " has non-finite points");
  }
}

std::vector<int> overlap_region(const TriMesh& moving, const VectorXc& pos, const TriMesh& fixed) {
  std::vector<int> out;
  const auto& F = moving.faces();
  for (Eigen::Index t = 0; t < F.rows(); ++t) {
    const Complex c = (pos[F(t, 0)] + pos[F(t, 1)] + pos[F(t, 2)]) / 3.0;
    if (find_containing(fixed, Eigen::Vector2d(c.real(), c.imag()))) out.push_back(static_cast<int>(t));
  }
  return out;
}

RegistrationAssignment assign_registration(const RegistrationProblem& p, const VectorXc& pos) {
  RegistrationAssignment a;
  const auto& F = p.moving->faces();
  for (Eigen::Index t = 0; t < F.rows(); ++t) {
    const Complex c = (pos[F(t, 0)] + pos[F(t, 1)] + pos[F(t, 2)]) / 3.0;
    if (auto hit = find_containing(*p.fixed, Eigen::Vector2d(c.real(), c.imag()))) {
      a.overlap.push_back(static_cast<int>(t));
      a.static_face.push_back(hit->face);
    }
  }
  for (const auto& r : p.regions) {
    VectorXc moved(r.moving.size());
    for (std::size_t i = 0; i < r.moving.size(); ++i) moved[i] = pos[r.moving[i]];
    std::vector<int> fwd(moved.size()), bwd(r.target.size());
    for (Eigen::Index i = 0; i < moved.size(); ++i) fwd[i] = nearest(moved[i], r.target);
    for (Eigen::Index j = 0; j < r.target.size(); ++j) bwd[j] = nearest(r.target[j], moved);
    a.forward.push_back(std::move(fwd));
    a.backward.push_back(std::move(bwd));
  }
  return a;
}

MismatchReport intensity_mismatch(const RegistrationProblem& p, const VectorXc& pos, const RegistrationAssignment& a) {
  const auto& F = p.moving->faces();
  const auto& G = p.fixed->faces();
  MismatchReport rep;
  rep.energy.gradient = VectorXc::Zero(pos.size());
  const std::size_t n = a.overlap.size();
  rep.per_face = VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (n == 0) return rep;

  const auto static_grad = face_gradient(*p.fixed, p.fixed_intensity);
  VectorXd area(n), err(n), sgn(n);
  std::vector<Complex> dI2(n);
  double total = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const int t = a.overlap[k], s = a.static_face[k];
    const Complex c = (pos[F(t, 0)] + pos[F(t, 1)] + pos[F(t, 2)]) / 3.0;
    const auto lambda = barycentric(*p.fixed, s, Eigen::Vector2d(c.real(), c.imag()));
    double i2 = 0.0;
    for (int j = 0; j < 3; ++j) i2 += lambda[j] * p.fixed_intensity[G(s, j)];
    const double i1 = (p.moving_intensity[F(t, 0)] + p.moving_intensity[F(t, 1)] + p.moving_intensity[F(t, 2)]) / 3.0;
    area[k] = 0.5 * double_area(pos[F(t, 0)], pos[F(t, 1)], pos[F(t, 2)]);
    err[k] = std::abs(i1 - i2);
    sgn[k] = sign(i1 - i2);
    dI2[k] = Complex(static_grad(s, 0), static_grad(s, 1));
    total += area[k];
    weighted += area[k] * err[k];
    rep.per_face[k] = err[k];
  }
  rep.overlap_area = total;
  if (!(std::abs(total) > 0.0)) return rep;
  const double E = weighted / total;
  rep.energy.value = E;
  for (std::size_t k = 0; k < n; ++k) {
    const int t = a.overlap[k];
    const double dE_dA = (err[k] - E) / total;
    const Complex dE_dc = (area[k] / total) * (-sgn[k]) * dI2[k];
    for (int j = 0; j < 3; ++j) {
      const Complex prev = pos[F(t, (j + 2) % 3)], next = pos[F(t, (j + 1) % 3)];
      rep.energy.gradient[F(t, j)] += dE_dA * 0.5 * double_area_grad(prev, next) + dE_dc / 3.0;
    }
  }
  return rep;
}

ScalarGrad chamfer_energy(const RegistrationProblem& p, const VectorXc& pos, const RegistrationAssignment& a) {
  ScalarGrad out;
  out.gradient = VectorXc::Zero(pos.size());
  for (std::size_t j = 0; j < p.regions.size(); ++j) {
    const auto& r = p.regions[j];
    VectorXc moved(r.moving.size());
    for (std::size_t i = 0; i < r.moving.size(); ++i) moved[i] = pos[r.moving[i]];
    const auto term = chamfer_fixed(moved, r.target, a.forward[j], a.backward[j]);
    out.value += term.value;
    for (std::size_t i = 0; i < r.moving.size(); ++i) out.gradient[r.moving[i]] += term.gradient[i];
  }
  return out;
}

EnergyReport registration_energy(const RegistrationProblem& p, const VectorXc& pos, const RegistrationAssignment& a) {
  const auto mismatch = intensity_mismatch(p, pos, a);
  const auto pc = chamfer_energy(p, pos, a);
  EnergyReport rep;
  rep.components["intensity"] = mismatch.energy.value;
  rep.components["chamfer"] = pc.value;
  rep.total = p.intensity_weight * mismatch.energy.value + p.chamfer_weight * pc.value;
  rep.gradient = p.intensity_weight * mismatch.energy.gradient + p.chamfer_weight * pc.gradient;
  return rep;
}

}  // namespace qcmap
