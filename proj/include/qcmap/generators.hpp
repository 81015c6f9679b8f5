#pragma once

#include <random>

#include "qcmap/mesh.hpp"

namespace qcmap::gen {

using Rng = std::mt19937_64;

/// Convex polygon (random angular gaps on an ellipse) triangulated as a fan from vertex 0;
/// |F| = |V| - 2 and there are no interior vertices.
TriMesh fan_polygon(int n_vertices, Rng& rng);

/// Unit disk built from `rings` concentric rings of 6k vertices each (1 + 3R(R+1) vertices).
/// Interior vertices are displaced by up to `jitter` times the ring spacing.
TriMesh disk_mesh(int rings, double jitter, Rng& rng);
TriMesh disk_mesh(int rings);

/// Annulus with `rings` rings of `segments` vertices between radii r_in and r_out.
TriMesh annulus_mesh(int rings, int segments, double r_in, double r_out);

/// Axis-aligned rectangle [x0,x1] x [y0,y1] split into nx * ny squares, two triangles each.
TriMesh grid_mesh(int nx, int ny, double x0, double y0, double x1, double y1);

/// Smooth per-vertex complex field (a few low-frequency plane waves) scaled so that the
/// largest vertex modulus equals max_abs.
VectorXc smooth_field(const TriMesh& mesh, double max_abs, Rng& rng, int modes = 4);

/// Independent uniform samples in the disk of radius max_abs, one per face.
VectorXc random_face_mu(const TriMesh& mesh, double max_abs, Rng& rng);

/// Orientation-preserving piecewise-linear map: smooth displacement plus a random similarity,
/// with the displacement amplitude halved until every image face is positively oriented.
VectorXc random_homeomorphism(const TriMesh& mesh, Rng& rng, double amplitude = 0.15);

}  // namespace qcmap::gen
