#pragma once

#include <map>
#include <string>
#include <vector>

#include "qcmap/mesh.hpp"

namespace qcmap {

/// Signed area of a closed polygon by Green's theorem; positive for counter-clockwise order.
template <typename Derived>
typename Derived::Scalar::value_type green_area(const Eigen::MatrixBase<Derived>& loop) {
  using Real = typename Derived::Scalar::value_type;
  const Eigen::Index n = loop.size();
  Real a(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = loop(i), q = loop((i + 1) % n);
    a += p.real() * q.imag() - p.imag() * q.real();
  }
  return a / Real(2);
}

/// Total image area of a mesh map: Green's theorem over every boundary loop.
double green_area(const TriMesh& mesh, const VectorXc& positions);

/// Gradient of green_area(mesh, positions) with respect to each vertex position.
VectorXc green_area_gradient(const TriMesh& mesh, const VectorXc& positions);

/// A value with its gradient (complex convention dL/dx + i dL/dy per entry).
struct ScalarGrad {
  double value = 0.0;
  VectorXc gradient;
};

struct EnergyReport {
  double total = 0.0;
  std::map<std::string, double> components;
  VectorXc gradient;       // with respect to the mapped vertex positions
  double d_s_tilde = 0.0;  // barrier contribution
  std::vector<int> degenerate_faces;
};

// --- density equalization -------------------------------------------------

struct DensityProblem {
  const TriMesh* mesh = nullptr;
  VectorXd population;        // p(T) > 0 per face
  double barrier_omega = 1.0;  // scale cap
  double barrier_weight = 0.0;
};

/// Throws InputError unless every population entry is positive and sizes match.
void check_density_problem(const DensityProblem& problem);

/// sum_T (rho_T - rho_bar)^2 + barrier_weight * max(0, e^{s_tilde} - omega), with
/// rho_T = p(T) / Area(f(T)) and rho_bar = sum p / (Green's-theorem image area).
/// Components: "variance" and "barrier" (unweighted hinge).
EnergyReport density_energy(const DensityProblem& problem, const VectorXc& f_positions, double s_tilde);

struct DensityStats {
  VectorXd density;  // rho_T
  double mean_density = 0.0;  // rho_bar
  double normalized_variance = 0.0;  // variance over faces of rho_T / rho_bar
};

DensityStats density_statistics(const TriMesh& mesh, const VectorXd& population, const VectorXc& f_positions);

// --- Beltrami regularizers ------------------------------------------------

/// (1/|V|) sum |mu_v|^2.
ScalarGrad e_bc(const VectorXc& mu_vertex);

/// (1/|F|) sum_T |grad mu(T)|^2 for the piecewise-linear interpolant of mu.
ScalarGrad e_smooth(const TriMesh& mesh, const VectorXc& mu_vertex);

// --- registration ---------------------------------------------------------

/// Symmetric chamfer term for one region pair:
/// mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2, gradient on `moved`.
/// Nearest-neighbour assignments are recomputed by this call and then held fixed.
ScalarGrad chamfer(const VectorXc& moved, const VectorXc& target);

struct RegionPair {
  std::vector<int> moving;  // vertex indices on the moving mesh
  VectorXc target;          // point set on the static side
};

struct RegistrationProblem {
  const TriMesh* moving = nullptr;
  VectorXd moving_intensity;  // I1 per moving vertex
  const TriMesh* fixed = nullptr;
  VectorXd fixed_intensity;  // I2 per static vertex
  std::vector<RegionPair> regions;
  double intensity_weight = 1.0;
  double chamfer_weight = 1.0;
};

/// Throws InputError / EmptyRegion on inconsistent sizes, bad indices or empty regions.
void check_registration_problem(const RegistrationProblem& problem);

/// Moving faces whose image centroid lies in the static domain.
std::vector<int> overlap_region(const TriMesh& moving, const VectorXc& moved_positions, const TriMesh& fixed);

/// Discrete choices of one evaluation, frozen while gradients are taken.
struct RegistrationAssignment {
  std::vector<int> overlap;            // moving faces
  std::vector<int> static_face;        // containing static face per overlap face
  std::vector<std::vector<int>> forward;   // per region: nearest target for each moving vertex
  std::vector<std::vector<int>> backward;  // per region: nearest moving vertex for each target
};

RegistrationAssignment assign_registration(const RegistrationProblem& problem, const VectorXc& moved_positions);

struct MismatchReport {
  ScalarGrad energy;            // area-weighted mean |I1 - I2| over the overlap
  VectorXd per_face;            // |mean I1 - I2(centroid)| per overlap face
  double overlap_area = 0.0;
};

/// Mean L1 intensity mismatch over the overlap, pulled back to the moving mesh: one sample of
/// I2 at each image centroid, weighted by the image face area.
MismatchReport intensity_mismatch(const RegistrationProblem& problem, const VectorXc& moved_positions,
                                  const RegistrationAssignment& assignment);

/// Sum of chamfer terms over region pairs with the assignment's nearest neighbours.
ScalarGrad chamfer_energy(const RegistrationProblem& problem, const VectorXc& moved_positions,
                          const RegistrationAssignment& assignment);

/// intensity_weight * E_I + chamfer_weight * E_pc. Components "intensity" and "chamfer" are
/// unweighted.
EnergyReport registration_energy(const RegistrationProblem& problem, const VectorXc& moved_positions,
                                 const RegistrationAssignment& assignment);

}  // namespace qcmap
