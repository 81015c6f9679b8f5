#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include "qcmap/mesh.hpp"

namespace qcmap {

/// A vertex whose image is prescribed.
struct Pin {
  int vertex = -1;
  Complex target;
};
using PinPair = std::array<Pin, 2>;

struct AssembleOptions {
  /// Debug negative control: drop the 1/sqrt(d_T) row scaling.
  bool unscaled_rows = false;
};

/// Assembled least-squares quasiconformal system for one mesh, Beltrami field and pin pair.
///
/// Row T of M holds W_{j,T} / sqrt(d_T) at the corners of face T, with
///   W_1 = (1+mu)(x3-x2) + i(1-mu)(y3-y2)   (and cyclic permutations),
/// so the energy is ||M U||^2. Columns are split into free and pinned vertices; the real
/// system A u = b is the 2|F| x 2(|V|-2) realification of M_f U_f = -M_p U_p with the free
/// unknowns ordered (Re U_f, Im U_f).
struct LsqcSystem {
  const TriMesh* mesh = nullptr;
  VectorXc mu_faces;
  PinPair pins;

  SparseMatrixc M;
  Eigen::Matrix<Complex, Eigen::Dynamic, 3> rows;  // scaled W per face, corner order
  VectorXd row_scale;                              // 1/sqrt(d_T) (or 1 when unscaled)

  std::vector<int> free_column;    // vertex -> free column, -1 for pins
  std::vector<int> free_vertices;  // free column -> vertex

  SparseMatrixd A;
  VectorXd b;

  std::uint64_t id = 0;  // distinguishes assemblies; results remember it

  Eigen::Index n_free() const { return static_cast<Eigen::Index>(free_vertices.size()); }
};

/// Throws MuOutOfRange when some |mu_T| >= 1 (or is not finite) and DuplicatePins when both
/// pins name the same vertex.
LsqcSystem assemble(const TriMesh& mesh, const VectorXc& mu_faces, const PinPair& pins,
                    const AssembleOptions& options = {});

/// Only two pins are supported; any other count throws InputError.
LsqcSystem assemble(const TriMesh& mesh, const VectorXc& mu_faces, const std::vector<Pin>& pins,
                    const AssembleOptions& options = {});

/// Numeric factorization of A^T A for one assembled system. Immutable once built.
struct NormalFactorization {
  Eigen::SimplicialLDLT<SparseMatrixd> ldlt;
  SparseMatrixd normal;  // A^T A
  std::uint64_t system_id = 0;

  VectorXd solve(const VectorXd& rhs) const;
};

struct MapResult {
  VectorXc U;                      // image position of every vertex
  double energy = 0.0;             // ||M U||^2
  double residual_norm = 0.0;      // relative normal-equation residual
  std::vector<int> flipped_faces;  // image d_T <= 0
  int refinement_iterations = 0;
  std::shared_ptr<const NormalFactorization> factor;
  std::uint64_t system_id = 0;
};

/// Solves the pinned system through a sparse LDLT of the normal equations. The symbolic
/// analysis is computed once per sparsity pattern and reused by later calls, as long as no
/// earlier MapResult still holds the cached factorization.
class LsqcSolver {
 public:
  MapResult solve(const LsqcSystem& system);

  int analyses() const { return analyses_; }
  int factorizations() const { return factorizations_; }

 private:
  struct PatternKey {
    const TriMesh* mesh = nullptr;
    Eigen::Index faces = -1, vertices = -1;
    int pin0 = -1, pin1 = -1;
    bool operator==(const PatternKey&) const = default;
  };
  PatternKey key_;
  std::shared_ptr<NormalFactorization> cache_;
  int analyses_ = 0;
  int factorizations_ = 0;
};

/// One-shot solve with a fresh solver.
MapResult solve(const LsqcSystem& system);

/// ||M U||^2 for an arbitrary vertex map.
double energy(const LsqcSystem& system, const VectorXc& U);

/// Indices of faces whose image has non-positive signed area.
std::vector<int> flipped_faces(const TriMesh& mesh, const VectorXc& U);

/// Approximately farthest-apart pair of boundary vertices (exact when the boundary has at
/// most 4096 vertices, convex hull + rotating calipers otherwise).
std::array<int, 2> pick_pins(const TriMesh& mesh);

/// Pins mapped to their own positions.
PinPair identity_pins(const TriMesh& mesh, const std::array<int, 2>& vertices);

/// x -> s e^{i phi} x + t, elementwise.
template <typename Derived>
VectorXc apply_similarity(const Eigen::MatrixBase<Derived>& U, double phi, double s, Complex t) {
  if (!(s > 0.0)) throw InputError("apply_similarity: scale must be positive");
  const Complex a = std::polar(s, phi);
  return (a * U.array() + t).matrix();
}

/// {"pins": [...], "energy", "residual", "flipped_count", "flipped_faces"}.
nlohmann::json report_json(const LsqcSystem& system, const MapResult& result);

}  // namespace qcmap
