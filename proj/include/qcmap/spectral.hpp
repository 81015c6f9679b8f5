#pragma once

#include <string>

#include <Eigen/Dense>

#include "qcmap/mesh.hpp"

namespace qcmap {

/// Cotangent stiffness matrix and lumped mass.
///
/// `L` stores the negated cotangent Laplacian, so it is positive semi-definite:
///   L_ij = -1/2 (cot a_ij + cot b_ij) for an edge (one term on boundary edges),
///   L_ii = -sum_{j != i} L_ij.
/// `mass` holds the diagonal M_ii = one third of the areas of the faces around vertex i.
struct LaplacePair {
  SparseMatrixd L;
  VectorXd mass;
  int clamped_cotangents = 0;

  SparseMatrixd mass_matrix() const;
};

LaplacePair cotan_laplacian(const TriMesh& mesh);

struct Eigenpairs {
  VectorXd values;          // ascending
  Eigen::MatrixXd vectors;  // one M-orthonormal eigenvector per column
  int iterations = 0;
};

struct EigenOptions {
  int dense_below = 400;  // vertex count under which a dense solve is used
  int max_iterations = 2000;
  double tolerance = 1e-11;
  unsigned seed = 7;
};

/// k smallest eigenpairs of L v = lambda M v. Dense generalized solve on small meshes,
/// shift-invert subspace iteration on the sparse factorization otherwise. Throws
/// ConvergenceFailure when the iteration cap is reached.
Eigenpairs smallest_eigenpairs(const LaplacePair& pair, int k, const EigenOptions& options = {});

/// Dense reference solve of the full generalized problem (all |V| pairs).
Eigenpairs dense_eigenpairs(const LaplacePair& pair);

/// eigenvalues.csv ("index,lambda") and eigenvectors.csv (header v0..v{k-1}, one row per vertex).
void write_eigenpairs_csv(const std::string& directory, const Eigenpairs& pairs);

}  // namespace qcmap
