#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qcmap/mesh.hpp"

namespace qcmap {

/// Beltrami coefficients stored per vertex, per face, or both.
struct BeltramiField {
  std::optional<VectorXc> per_vertex;
  std::optional<VectorXc> per_face;

  /// Largest modulus over the populated representations (0 when empty).
  double sup_norm() const;
};

/// Per-face coefficients from the vertex representation when present, otherwise per_face.
/// Throws ShapeMismatch when sizes disagree with the mesh.
VectorXc face_values(const TriMesh& mesh, const BeltramiField& field);

/// {"per_vertex": [[re,im],...], "per_face": [[re,im],...]}, both arrays optional.
BeltramiField read_beltrami_json(const std::string& path);
void write_beltrami_json(const std::string& path, const BeltramiField& field);

/// Reads "re,im" rows (an optional non-numeric header line is skipped).
VectorXc read_complex_csv(const std::string& path);

/// Per-face gradient stencil: columns (gx1, gx2, gx3, gy1, gy2, gy3) so that
/// du/dx = sum_j gx_j u_j and du/dy = sum_j gy_j u_j on each face.
Eigen::Matrix<double, Eigen::Dynamic, 6> gradient_stencil(const TriMesh& mesh);

/// Exact gradient of the piecewise-linear interpolant of a real or complex vertex field.
template <typename Derived>
FaceGrad<typename Derived::Scalar> face_gradient(const TriMesh& mesh, const Eigen::MatrixBase<Derived>& field) {
  using Scalar = typename Derived::Scalar;
  const auto& F = mesh.faces();
  const auto S = gradient_stencil(mesh);
  FaceGrad<Scalar> g(F.rows(), 2);
  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    Scalar gx(0), gy(0);
    for (int j = 0; j < 3; ++j) {
      gx += S(f, j) * field(F(f, j));
      gy += S(f, 3 + j) * field(F(f, j));
    }
    g(f, 0) = gx;
    g(f, 1) = gy;
  }
  return g;
}

struct BcResult {
  VectorXc mu;                // NaN on faces listed in `degenerate`
  std::vector<int> degenerate;  // faces where |f_z| vanished
};

/// Beltrami coefficient f_zbar / f_z of a piecewise-linear map given by vertex images.
BcResult bc_from_map(const TriMesh& mesh, const VectorXc& image);

/// Face value = mean of its three corner values.
VectorXc vertex_to_face(const TriMesh& mesh, const VectorXc& per_vertex);

/// Transpose of vertex_to_face: each face gradient spreads 1/3 to its corners.
VectorXc vertex_to_face_adjoint(const TriMesh& mesh, const VectorXc& per_face);

/// tanh(|x|/temp) e^{i arg x}; maps the plane into the open unit disk, 0 -> 0.
template <typename Scalar>
std::complex<Scalar> activation(const std::complex<Scalar>& x, Scalar temp) {
  const Scalar r = std::abs(x);
  if (r == Scalar(0)) return {0, 0};
  // tanh rounds to exactly 1 for r/temp > ~19; stay strictly inside the disk.
  const Scalar cap = Scalar(1) - 4 * std::numeric_limits<Scalar>::epsilon();
  return x * (std::min(std::tanh(r / temp), cap) / r);
}

template <typename Derived>
VectorXc activation(const Eigen::MatrixBase<Derived>& x, double temp) {
  return x.unaryExpr([temp](const Complex& v) { return activation(v, temp); });
}

/// Entries with modulus above `bound` are radially pulled back onto |mu| = bound.
BeltramiField clamp_sup_norm(const BeltramiField& field, double bound);
VectorXc clamp_sup_norm(const VectorXc& mu, double bound);

}  // namespace qcmap
