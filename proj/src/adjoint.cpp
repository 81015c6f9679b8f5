#include "qcmap/adjoint.hpp"

#include <cmath>

namespace qcmap {

GradBundle backprop_solve(const LsqcSystem& sys, const MapResult& res, const VectorXc& dL_dU) {
  if (!sys.mesh || !res.factor || res.system_id != sys.id || res.factor->system_id != sys.id)
    throw MismatchedSystem("backprop_solve: result was not produced by this system");
  const TriMesh& mesh = *sys.mesh;
  const Eigen::Index nv = mesh.n_vertices(), nf = mesh.n_faces(), nfree = sys.n_free();
  if (dL_dU.size() != nv || res.U.size() != nv) throw ShapeMismatch("backprop_solve: one gradient per vertex expected");

  GradBundle out;
  out.d_mu_faces = VectorXc::Zero(nf);

  VectorXd g(2 * nfree);
  for (Eigen::Index c = 0; c < nfree; ++c) {
    g[c] = dL_dU[sys.free_vertices[c]].real();
    g[c + nfree] = dL_dU[sys.free_vertices[c]].imag();
  }
  VectorXc lambda = VectorXc::Zero(nv);
  if (!g.isZero(0.0)) {
    const VectorXd l = res.factor->solve(g);
    for (Eigen::Index c = 0; c < nfree; ++c) lambda[sys.free_vertices[c]] = Complex(l[c], l[c + nfree]);
  }

  const VectorXc Z = sys.M * res.U;  // residual rows
  const VectorXc Y = sys.M * lambda;

  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  for (Eigen::Index f = 0; f < nf; ++f) {
    // dW_j/dmu = (dx_j - i dy_j), holomorphic in mu.
    Complex cU(0), cL(0);
    for (int j = 0; j < 3; ++j) {
      const int a = F(f, (j + 1) % 3), b = F(f, (j + 2) % 3);
      const Complex c = Complex(V(b, 0) - V(a, 0), -(V(b, 1) - V(a, 1))) * sys.row_scale[f];
      cU += c * res.U[F(f, j)];
      cL += c * lambda[F(f, j)];
    }
    out.d_mu_faces[f] = -(Z[f] * std::conj(cL) + Y[f] * std::conj(cU));
  }

  const VectorXc MhY = sys.M.adjoint() * Y;
  for (int k = 0; k < 2; ++k) {
    const int v = sys.pins[k].vertex;
    out.d_pin_targets[k] = dL_dU[v] - MhY[v];
  }
  return out;
}

SimilarityGrad backprop_similarity(const VectorXc& U, double phi, double s_tilde, Complex r,
                                   const VectorXc& dL_dgU) {
  if (U.size() != dL_dgU.size()) throw ShapeMismatch("backprop_similarity: size mismatch");
  (void)r;
  const Complex a = std::polar(std::exp(s_tilde), phi);
  const Complex I(0, 1);
  SimilarityGrad out;
  out.dL_dU = std::conj(a) * dL_dgU;
  out.d_r = dL_dgU.sum();
  double ds = 0.0, dphi = 0.0;
  for (Eigen::Index i = 0; i < U.size(); ++i) {
    const Complex w = a * U[i];
    ds += (std::conj(dL_dgU[i]) * w).real();
    dphi += (std::conj(dL_dgU[i]) * (I * w)).real();
  }
  out.d_s_tilde = ds;
  out.d_phi = dphi;
  return out;
}

ActivationGrad backprop_activation(const VectorXc& x, double temp, const VectorXc& dL_dmu) {
  if (x.size() != dL_dmu.size()) throw ShapeMismatch("backprop_activation: size mismatch");
  if (!(temp > 0.0)) throw InputError("backprop_activation: temperature must be positive");
  ActivationGrad out;
  out.dL_dx.resize(x.size());
  double dtemp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Complex G = dL_dmu[i];
    const double r = std::abs(x[i]);
    const double u = r / temp;
    // mu = h(r) x with h(r) = tanh(r/T)/r; q = h'(r)/r.
    double h, q;
    if (u < 1e-4) {
      const double u2 = u * u;
      h = (1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0) / temp;
      q = (-2.0 / 3.0 + 8.0 * u2 / 15.0) / (temp * temp * temp);
    } else {
      const double t = std::tanh(u);
      const double sech2 = 1.0 - t * t;
      h = t / r;
      q = (sech2 / temp - t / r) / (r * r);
    }
    out.dL_dx[i] = h * G + q * (std::conj(G) * x[i]).real() * x[i];
    // d mu / dT = -sech^2(r/T) x / T^2
    const double t = std::tanh(u);
    dtemp += (std::conj(G) * (-(1.0 - t * t) / (temp * temp) * x[i])).real();
  }
  out.dL_dtemp = dtemp;
  return out;
}

VectorXc backprop_interp(const RowSparseMatrixd& R, const VectorXc& dL_dfine) {
  if (dL_dfine.size() != R.rows()) throw ShapeMismatch("backprop_interp: one gradient per target row expected");
  return R.transpose().cast<Complex>() * dL_dfine;
}

nlohmann::json to_json(const GradBundle& g) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g.d_mu_faces.size(); ++i) arr.push_back({g.d_mu_faces[i].real(), g.d_mu_faces[i].imag()});
  return {{"d_mu_faces", arr},
          {"d_pin_targets", {{g.d_pin_targets[0].real(), g.d_pin_targets[0].imag()},
                             {g.d_pin_targets[1].real(), g.d_pin_targets[1].imag()}}},
          {"d_phi", g.d_phi},
          {"d_s_tilde", g.d_s_tilde},
          {"d_r", {g.d_r.real(), g.d_r.imag()}},
          {"d_temp", g.d_temp}};
}

}  // namespace qcmap
