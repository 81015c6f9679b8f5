#pragma once

#include <functional>

#include "qcmap/energies.hpp"
#include "qcmap/generators.hpp"

namespace qcmap::gen {

/// Population per face from a density function sampled at face centroids, p = rho * area,
/// rescaled so that the mean density sum p / sum area equals one.
VectorXd population_from_density(const TriMesh& mesh, const std::function<double(Complex)>& rho);

/// 1 + amplitude * exp(-|z - center|^2 / width^2).
std::function<double(Complex)> gaussian_peak(double amplitude, Complex center, double width);

/// Smooth test intensity on the plane.
double intensity(Complex p);

/// Data owned by a synthetic registration instance. `problem` points into the meshes, so the
/// instance must not be moved after problem() is called.
struct RegistrationInstance {
  TriMesh moving;
  TriMesh fixed;
  VectorXd moving_intensity;
  VectorXd fixed_intensity;
  std::vector<RegionPair> regions;

  RegistrationProblem problem() const;
};

/// Similarity z -> a z + t with a = s e^{i phi}.
struct Similarity {
  double phi = 0.0;
  double scale = 1.0;
  Complex t;
  Complex operator()(Complex z) const { return std::polar(scale, phi) * z + t; }
};

/// Static mesh = S(moving mesh) with I2(S(v)) = I1(v), plus three landmark-patch region pairs
/// whose targets are the S-images of the moving patches. The identity parameters with the
/// similarity set to S reproduce the static side exactly.
RegistrationInstance planted_registration(int rings, const Similarity& S);

/// Unit disk moving mesh against an offset square grid covering part of it. Intensities come
/// from intensity() composed with a smooth non-similar warp on the moving side; the three
/// region pairs match landmarks under the same warp.
RegistrationInstance partial_overlap_registration(int rings, int grid, Rng& rng);

}  // namespace qcmap::gen
