#pragma once

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "qcmap/lsqc.hpp"

namespace qcmap {

// Gradient convention: the derivative of a real loss L with respect to a complex quantity
// z = x + iy is stored as the complex number dL/dx + i dL/dy.

struct GradBundle {
  VectorXc d_mu_faces;
  std::array<Complex, 2> d_pin_targets{};
  double d_phi = 0.0;
  double d_s_tilde = 0.0;  // with respect to log s
  Complex d_r;
  double d_temp = 0.0;  // with respect to T_BC
};

/// Gradients of L through the pinned solve. One adjoint solve with the factorization the
/// forward solve produced; no refactorization. Throws MismatchedSystem when `result` did not
/// come from `system`.
GradBundle backprop_solve(const LsqcSystem& system, const MapResult& result, const VectorXc& dL_dU);

struct SimilarityGrad {
  VectorXc dL_dU;
  double d_phi = 0.0;
  double d_s_tilde = 0.0;
  Complex d_r;
};

/// Chain rule through g(x) = e^{s_tilde} e^{i phi} x + r.
SimilarityGrad backprop_similarity(const VectorXc& U, double phi, double s_tilde, Complex r,
                                   const VectorXc& dL_dgU);

struct ActivationGrad {
  VectorXc dL_dx;
  double dL_dtemp = 0.0;
};

/// Chain rule through mu = tanh(|x|/T) e^{i arg x}. At x = 0 the Jacobian is taken as I/T.
ActivationGrad backprop_activation(const VectorXc& x_tilde, double temp, const VectorXc& dL_dmu);

/// R^T dL_dfine; throws ShapeMismatch when dL_dfine does not have one entry per row of R.
VectorXc backprop_interp(const RowSparseMatrixd& R, const VectorXc& dL_dfine);

nlohmann::json to_json(const GradBundle& g);

}  // namespace qcmap
