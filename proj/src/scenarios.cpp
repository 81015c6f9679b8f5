#include "qcmap/scenarios.hpp"

#include <cmath>
#include <numbers>

namespace qcmap::gen {

VectorXd population_from_density(const TriMesh& mesh, const std::function<double(Complex)>& rho) {
  const auto& F = mesh.faces();
  VectorXd p(F.rows());
  double area = 0.0;
  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    const Complex c = (mesh.vertex(F(f, 0)) + mesh.vertex(F(f, 1)) + mesh.vertex(F(f, 2))) / 3.0;
    const double a = 0.5 * mesh.double_areas()[f];
    p[f] = rho(c) * a;
    area += a;
  }
  return p * (area / p.sum());
}

std::function<double(Complex)> gaussian_peak(double amplitude, Complex center, double width) {
  return [=](Complex z) { return 1.0 + amplitude * std::exp(-std::norm(z - center) / (width * width)); };
}

double intensity(Complex p) {
  const double x = p.real(), y = p.imag();
  return std::sin(2.5 * x + 0.3) + std::cos(2.0 * y - 0.5) + 0.5 * x * y;
}

RegistrationProblem RegistrationInstance::problem() const {
  RegistrationProblem p;
  p.moving = &moving;
  p.fixed = &fixed;
  p.moving_intensity = moving_intensity;
  p.fixed_intensity = fixed_intensity;
  p.regions = regions;
  return p;
}

namespace {

// Vertices within `radius` of each of three fixed points spread over the unit disk.
std::vector<std::vector<int>> landmark_patches(const TriMesh& mesh, double radius) {
  const Complex centers[3] = {Complex(-0.35, -0.35), Complex(0.45, -0.2), Complex(0.0, 0.45)};
  std::vector<std::vector<int>> out;
  for (const Complex& c : centers) {
    std::vector<int> patch;
    for (Eigen::Index v = 0; v < mesh.n_vertices(); ++v)
      if (std::abs(mesh.vertex(v) - c) < radius) patch.push_back(static_cast<int>(v));
    out.push_back(std::move(patch));
  }
  return out;
}

}  // namespace

RegistrationInstance planted_registration(int rings, const Similarity& S) {
  RegistrationInstance inst;
  inst.moving = disk_mesh(rings);
  const Eigen::Index nv = inst.moving.n_vertices();
  VectorXc img(nv);
  for (Eigen::Index v = 0; v < nv; ++v) img[v] = S(inst.moving.vertex(v));
  inst.fixed = TriMesh(to_points(img), inst.moving.faces());
  inst.moving_intensity.resize(nv);
  inst.fixed_intensity.resize(nv);
  for (Eigen::Index v = 0; v < nv; ++v) {
    inst.fixed_intensity[v] = intensity(img[v]);
    inst.moving_intensity[v] = inst.fixed_intensity[v];
  }
  for (auto& patch : landmark_patches(inst.moving, 0.3)) {
    RegionPair r;
    r.target.resize(static_cast<Eigen::Index>(patch.size()));
    for (std::size_t i = 0; i < patch.size(); ++i) r.target[i] = img[patch[i]];
    r.moving = std::move(patch);
    inst.regions.push_back(std::move(r));
  }
  return inst;
}

RegistrationInstance partial_overlap_registration(int rings, int grid, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double k1 = 1.5 + 0.5 * u(rng), k2 = 1.5 + 0.5 * u(rng), amp = 0.06;
  const Similarity S{0.15 * u(rng), 1.0 + 0.05 * u(rng), Complex(0.1 * u(rng), 0.1 * u(rng))};
  auto warp = [&](Complex z) {
    const Complex d(amp * std::sin(k1 * z.imag()), amp * std::sin(k2 * z.real()));
    return S(z + d);
  };

  RegistrationInstance inst;
  inst.moving = disk_mesh(rings);
  const double x0 = -0.6 + 0.1 * u(rng), y0 = -0.9 + 0.1 * u(rng);
  inst.fixed = grid_mesh(grid, grid, x0, y0, x0 + 1.8, y0 + 1.6);
  const Eigen::Index nv = inst.moving.n_vertices();
  inst.moving_intensity.resize(nv);
  for (Eigen::Index v = 0; v < nv; ++v) inst.moving_intensity[v] = intensity(warp(inst.moving.vertex(v)));
  inst.fixed_intensity.resize(inst.fixed.n_vertices());
  for (Eigen::Index v = 0; v < inst.fixed.n_vertices(); ++v) inst.fixed_intensity[v] = intensity(inst.fixed.vertex(v));

  for (auto& patch : landmark_patches(inst.moving, 0.15)) {
    RegionPair r;
    r.target.resize(static_cast<Eigen::Index>(patch.size()));
    for (std::size_t i = 0; i < patch.size(); ++i) r.target[i] = warp(inst.moving.vertex(patch[i]));
    r.moving = std::move(patch);
    inst.regions.push_back(std::move(r));
  }
  return inst;
}

}  // namespace qcmap::gen
