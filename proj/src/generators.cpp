#include "qcmap/generators.hpp"

#include <cmath>
#include <numbers>

namespace qcmap::gen {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

// Triangulates the band between two closed rings ordered by increasing angle.
void zip_rings(const std::vector<int>& inner, const std::vector<double>& a_in, const std::vector<int>& outer,
               const std::vector<double>& a_out, std::vector<std::array<int, 3>>& faces) {
  const std::size_t ni = inner.size(), no = outer.size();
  auto ang = [](const std::vector<double>& a, std::size_t k) { return a[k % a.size()] + kTwoPi * (k / a.size()); };
  std::size_t i = 0, j = 0;
  while (i < ni || j < no) {
    const bool advance_outer = i == ni || (j < no && ang(a_out, j + 1) <= ang(a_in, i + 1));
    if (advance_outer) {
      faces.push_back({outer[j % no], outer[(j + 1) % no], inner[i % ni]});
      ++j;
    } else {
      faces.push_back({inner[i % ni], outer[j % no], inner[(i + 1) % ni]});
      ++i;
    }
  }
}

TriMesh pack(const std::vector<Complex>& pts, const std::vector<std::array<int, 3>>& tris) {
  Points2d V(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) V.row(i) << pts[i].real(), pts[i].imag();
  Faces F(tris.size(), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) F.row(i) << tris[i][0], tris[i][1], tris[i][2];
  return TriMesh(std::move(V), std::move(F));
}

}  // namespace

TriMesh fan_polygon(int n, Rng& rng) {
  std::vector<double> gaps(n);
  for (auto& g : gaps) g = uniform(rng, 1.0, 3.0);
  double total = 0.0;
  for (double g : gaps) total += g;
  const double sx = uniform(rng, 0.6, 1.4), sy = uniform(rng, 0.6, 1.4), rot = uniform(rng, 0.0, kTwoPi);
  std::vector<Complex> pts;
  double a = 0.0;
  for (int i = 0; i < n; ++i) {
    pts.push_back(std::polar(1.0, rot) * Complex(sx * std::cos(a), sy * std::sin(a)));
    a += kTwoPi * gaps[i] / total;
  }
  std::vector<std::array<int, 3>> tris;
  for (int i = 1; i + 1 < n; ++i) tris.push_back({0, i, i + 1});
  return pack(pts, tris);
}

TriMesh disk_mesh(int rings, double jitter, Rng& rng) {
  std::vector<Complex> base{Complex(0, 0)};
  std::vector<Complex> offsets{Complex(0, 0)};  // (radial, angular) displacement in ring units
  std::vector<double> spacing{0.0};
  std::vector<std::array<int, 3>> tris;
  std::vector<int> prev{0};
  std::vector<double> prev_ang{0.0};
  for (int k = 1; k <= rings; ++k) {
    const int n = 6 * k;
    const double offset = (k % 2) * std::numbers::pi / n;
    std::vector<int> ids;
    std::vector<double> angs;
    for (int j = 0; j < n; ++j) {
      const double t = offset + kTwoPi * j / n;
      ids.push_back(static_cast<int>(base.size()));
      angs.push_back(t);
      base.emplace_back(static_cast<double>(k) / rings, t);
      spacing.push_back(kTwoPi / n);
      offsets.push_back(k < rings && jitter > 0.0 ? Complex(uniform(rng, -1, 1), uniform(rng, -1, 1)) : Complex(0, 0));
    }
    if (k == 1) {
      for (int j = 0; j < n; ++j) tris.push_back({0, ids[j], ids[(j + 1) % n]});
    } else {
      zip_rings(prev, prev_ang, ids, angs, tris);
    }
    prev = std::move(ids);
    prev_ang = std::move(angs);
  }
  // Shrink the jitter until every face keeps its orientation (amp = 0 always passes).
  for (double amp = jitter;; amp = amp > 1e-3 ? 0.5 * amp : 0.0) {
    std::vector<Complex> pts(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
      pts[i] = std::polar(base[i].real() + amp * offsets[i].real() / rings, base[i].imag() + amp * offsets[i].imag() * spacing[i]);
    bool ok = true;
    for (const auto& t : tris) ok = ok && double_area(pts[t[0]], pts[t[1]], pts[t[2]]) > 1e-3 / (rings * rings);
    if (ok || amp == 0.0) return pack(pts, tris);
  }
}

TriMesh disk_mesh(int rings) {
  Rng rng(0);
  return disk_mesh(rings, 0.0, rng);
}

TriMesh annulus_mesh(int rings, int segments, double r_in, double r_out) {
  std::vector<Complex> pts;
  for (int k = 0; k < rings; ++k) {
    const double rad = r_in + (r_out - r_in) * k / (rings - 1);
    for (int j = 0; j < segments; ++j) pts.push_back(std::polar(rad, kTwoPi * j / segments));
  }
  std::vector<std::array<int, 3>> tris;
  for (int k = 0; k + 1 < rings; ++k)
    for (int j = 0; j < segments; ++j) {
      const int a = k * segments + j, b = k * segments + (j + 1) % segments;
      const int c = a + segments, d = b + segments;
      tris.push_back({a, b, d});
      tris.push_back({a, d, c});
    }
  return pack(pts, tris);
}

TriMesh grid_mesh(int nx, int ny, double x0, double y0, double x1, double y1) {
  std::vector<Complex> pts;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) pts.emplace_back(x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny);
  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = j * (nx + 1) + i, b = a + 1, c = a + nx + 1, d = c + 1;
      tris.push_back({a, b, d});
      tris.push_back({a, d, c});
    }
  return pack(pts, tris);
}

VectorXc smooth_field(const TriMesh& mesh, double max_abs, Rng& rng, int modes) {
  VectorXc f = VectorXc::Zero(mesh.n_vertices());
  for (int m = 0; m < modes; ++m) {
    const double kx = uniform(rng, -3.0, 3.0), ky = uniform(rng, -3.0, 3.0), ph = uniform(rng, 0.0, kTwoPi);
    const Complex c(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    for (Eigen::Index v = 0; v < f.size(); ++v) {
      const auto p = mesh.vertex(v);
      f[v] += c * std::polar(1.0, kx * p.real() + ky * p.imag() + ph);
    }
  }
  const double m = f.cwiseAbs().maxCoeff();
  return m > 0 ? VectorXc(f * (max_abs / m)) : f;
}

VectorXc random_face_mu(const TriMesh& mesh, double max_abs, Rng& rng) {
  VectorXc mu(mesh.n_faces());
  for (Eigen::Index f = 0; f < mu.size(); ++f)
    mu[f] = std::polar(max_abs * std::sqrt(uniform(rng, 0.0, 1.0)), uniform(rng, 0.0, kTwoPi));
  return mu;
}

VectorXc random_homeomorphism(const TriMesh& mesh, Rng& rng, double amplitude) {
  const double k1 = uniform(rng, 1.0, 3.0), k2 = uniform(rng, 1.0, 3.0);
  const double c1 = uniform(rng, 0.0, kTwoPi), c2 = uniform(rng, 0.0, kTwoPi);
  const double q = uniform(rng, -0.3, 0.3);
  const Complex a = std::polar(uniform(rng, 0.5, 2.0), uniform(rng, 0.0, kTwoPi));
  const Complex t(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
  for (double amp = amplitude; amp > 1e-6; amp *= 0.5) {
    VectorXc img(mesh.n_vertices());
    for (Eigen::Index v = 0; v < img.size(); ++v) {
      const auto p = mesh.vertex(v);
      const double x = p.real(), y = p.imag();
      const Complex w(x + amp * std::sin(k1 * y + c1) + amp * q * x * x, y + amp * std::sin(k2 * x + c2) + amp * q * x * y);
      img[v] = a * w + t;
    }
    bool ok = true;
    const auto& F = mesh.faces();
    for (Eigen::Index f = 0; f < F.rows() && ok; ++f) ok = double_area(img[F(f, 0)], img[F(f, 1)], img[F(f, 2)]) > 0.0;
    if (ok) return img;
  }
  VectorXc img(mesh.n_vertices());
  for (Eigen::Index v = 0; v < img.size(); ++v) img[v] = a * mesh.vertex(v) + t;
  return img;
}

}  // namespace qcmap::gen
