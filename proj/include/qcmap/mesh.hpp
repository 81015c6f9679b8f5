#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "qcmap/types.hpp"

namespace qcmap {

/// Twice the signed area of triangle (a, b, c); positive for counter-clockwise order.
template <typename Scalar>
inline Scalar double_area(const std::complex<Scalar>& a, const std::complex<Scalar>& b,
                          const std::complex<Scalar>& c) {
  return (a.real() * b.imag() - a.imag() * b.real()) + (b.real() * c.imag() - b.imag() * c.real()) +
         (c.real() * a.imag() - c.imag() * a.real());
}

/// Outcome of checking raw (V, F) arrays against the mesh invariants.
struct ValidationReport {
  std::vector<std::string> issues;
  bool reoriented = false;
  bool ok() const { return issues.empty(); }
};

/// Uniform background grid over the mesh bounding box. Each cell lists the faces whose
/// (slightly inflated) bounding box overlaps it.
struct FaceGrid {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double cell = 1.0;
  int nx = 1, ny = 1;
  std::vector<int> offsets;  // CSR row starts, size nx*ny + 1
  std::vector<int> faces;

  std::optional<int> cell_of(const Eigen::Vector2d& p) const;
};

/// Planar triangle mesh with counter-clockwise faces. Immutable once constructed.
class TriMesh {
 public:
  TriMesh() = default;

  /// Validates the arrays and builds derived data. Uniformly clockwise input is flipped;
  /// any other violation throws ValidationError listing every issue found.
  TriMesh(Points2d vertices, Faces faces);

  /// Same checks as the constructor, without throwing.
  static ValidationReport validate(const Points2d& vertices, const Faces& faces);

  const Points2d& vertices() const { return V_; }
  const Faces& faces() const { return F_; }
  Eigen::Index n_vertices() const { return V_.rows(); }
  Eigen::Index n_faces() const { return F_.rows(); }

  Complex vertex(Eigen::Index i) const { return {V_(i, 0), V_(i, 1)}; }
  VectorXc complex_vertices() const { return to_complex(V_); }

  /// Per-face signed twice-area d_T (all strictly positive).
  const VectorXd& double_areas() const { return dT_; }

  /// Boundary loops, each following face orientation: the outer loop runs counter-clockwise,
  /// hole loops clockwise. The loop with the largest enclosed area comes first.
  const std::vector<std::vector<int>>& boundary_loops() const { return loops_; }

  /// Bounding-box diagonal length.
  double scale() const { return scale_; }

  bool reoriented() const { return reoriented_; }

  const FaceGrid& grid() const { return grid_; }

 private:
  Points2d V_;
  Faces F_;
  VectorXd dT_;
  std::vector<std::vector<int>> loops_;
  double scale_ = 0.0;
  bool reoriented_ = false;
  FaceGrid grid_;
};

/// Boundary loops of a valid mesh (same as TriMesh::boundary_loops()).
inline const std::vector<std::vector<int>>& boundary(const TriMesh& mesh) {
  return mesh.boundary_loops();
}

struct BaryLocation {
  int face = -1;
  Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
};

/// Barycentric coordinates of p with respect to one face, from the 2x2 edge-basis solve.
Eigen::Vector3d barycentric(const TriMesh& mesh, int face, const Eigen::Vector2d& p);

/// Tolerance used when deciding that a point lies inside a face.
inline constexpr double kContainTol = 1e-12;

/// Lowest-index face whose barycentric coordinates are all >= -kContainTol, if any.
std::optional<BaryLocation> find_containing(const TriMesh& mesh, const Eigen::Vector2d& p);

/// Face minimizing |l1|+|l2|+|l3| over the whole mesh. Containing faces win (lowest index
/// among them); otherwise the minimizer is taken over all faces, ties to the lowest index.
BaryLocation locate(const TriMesh& mesh, const Eigen::Vector2d& p);

inline BaryLocation locate(const TriMesh& mesh, const Complex& p) {
  return locate(mesh, Eigen::Vector2d(p.real(), p.imag()));
}

/// Sparse |targets| x |V| matrix of barycentric weights; rows sum to one.
RowSparseMatrixd build_interp(const TriMesh& source, const Points2d& targets);

/// Number of edge-connected components among the listed faces (0 for an empty list).
int face_components(const TriMesh& mesh, const std::vector<int>& faces);

struct SplitResult {
  TriMesh mesh;
  int vertex = -1;
};

/// Replaces face (v1,v2,v3) by three faces around v = sum alpha_j v_j. The child omitting
/// v1 keeps the parent's index; the children omitting v2 and v3 are appended in that order.
SplitResult split_face(const TriMesh& mesh, int face, const Eigen::Vector3d& alpha);

}  // namespace qcmap
