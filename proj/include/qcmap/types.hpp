#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace qcmap {

using Complex = std::complex<double>;

using VectorXd = Eigen::VectorXd;
using VectorXc = Eigen::VectorXcd;
using VectorXi = Eigen::VectorXi;

/// Planar vertex positions, one row per vertex.
template <typename Scalar>
using Points2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
using Points2d = Points2<double>;

/// Triangle connectivity, one row per face.
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

/// Per-face gradients of a scalar field, one (d/dx, d/dy) row per face.
template <typename Scalar>
using FaceGrad = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

using SparseMatrixd = Eigen::SparseMatrix<double>;
using SparseMatrixc = Eigen::SparseMatrix<Complex>;
using RowSparseMatrixd = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Error hierarchy. Each maps to one failure class of the public operations.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct InvalidWeights : Error {
  using Error::Error;
};
struct MuOutOfRange : Error {
  MuOutOfRange(const std::string& what, int face) : Error(what), face(face) {}
  int face;
};
struct DuplicatePins : Error {
  using Error::Error;
};
struct SolverFailure : Error {
  using Error::Error;
};
struct MismatchedSystem : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};
struct ConvergenceFailure : Error {
  using Error::Error;
};
struct EmptyRegion : Error {
  using Error::Error;
};
struct NonFiniteGradient : Error {
  using Error::Error;
};
struct ConnectivityMismatch : Error {
  using Error::Error;
};

/// Points stored as complex numbers x + iy.
inline VectorXc to_complex(const Points2d& p) {
  VectorXc z(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) z[i] = Complex(p(i, 0), p(i, 1));
  return z;
}

inline Points2d to_points(const VectorXc& z) {
  Points2d p(z.size(), 2);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    p(i, 0) = z[i].real();
    p(i, 1) = z[i].imag();
  }
  return p;
}

}  // namespace qcmap
