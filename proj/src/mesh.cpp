#include "qcmap/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace qcmap {

namespace {

struct HalfEdge {
  int from, to, face;
};

bool less_directed(const HalfEdge& a, const HalfEdge& b) {
  return std::tie(a.from, a.to, a.face) < std::tie(b.from, b.to, b.face);
}

std::vector<HalfEdge> half_edges(const Faces& F) {
  std::vector<HalfEdge> h;
  h.reserve(3 * F.rows());
  for (int f = 0; f < F.rows(); ++f)
    for (int k = 0; k < 3; ++k) h.push_back({F(f, k), F(f, (k + 1) % 3), f});
  std::sort(h.begin(), h.end(), less_directed);
  return h;
}

bool has_directed(const std::vector<HalfEdge>& h, int from, int to) {
  auto it = std::lower_bound(h.begin(), h.end(), HalfEdge{from, to, -1}, less_directed);
  return it != h.end() && it->from == from && it->to == to;
}

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

double bbox_diagonal(const Points2d& V) {
  if (V.rows() == 0) return 0.0;
  return (V.colwise().maxCoeff() - V.colwise().minCoeff()).norm();
}

std::vector<std::vector<int>> trace_loops(const Points2d& V, const Faces& F,
                                          const std::vector<HalfEdge>& h) {
  std::vector<int> next(V.rows(), -1);
  for (const auto& e : h)
    if (!has_directed(h, e.to, e.from)) next[e.from] = e.to;

  std::vector<std::vector<int>> loops;
  std::vector<char> seen(V.rows(), 0);
  for (int start = 0; start < V.rows(); ++start) {
    if (next[start] < 0 || seen[start]) continue;
    std::vector<int> loop;
    int v = start;
    while (!seen[v]) {
      seen[v] = 1;
      loop.push_back(v);
      v = next[v];
      if (v < 0) break;
    }
    loops.push_back(std::move(loop));
  }
  auto loop_area = [&](const std::vector<int>& loop) {
    double a = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const int p = loop[i], q = loop[(i + 1) % loop.size()];
      a += V(p, 0) * V(q, 1) - V(p, 1) * V(q, 0);
    }
    return std::abs(a);
  };
  std::stable_sort(loops.begin(), loops.end(), [&](const auto& a, const auto& b) {
    return loop_area(a) > loop_area(b);
  });
  (void)F;
  return loops;
}

FaceGrid build_grid(const Points2d& V, const Faces& F) {
  FaceGrid g;
  const Eigen::Vector2d lo = V.colwise().minCoeff().transpose();
  const Eigen::Vector2d hi = V.colwise().maxCoeff().transpose();
  const Eigen::Vector2d ext = hi - lo;
  const double pad = 1e-9 * std::max(ext.norm(), 1e-300);
  const double area = std::max(ext.x(), pad) * std::max(ext.y(), pad);
  g.cell = std::max(std::sqrt(area / std::max<Eigen::Index>(F.rows(), 1)), 1e-300);
  g.origin = lo - Eigen::Vector2d::Constant(pad);
  g.nx = std::clamp(static_cast<int>(std::ceil((ext.x() + 2 * pad) / g.cell)), 1, 4096);
  g.ny = std::clamp(static_cast<int>(std::ceil((ext.y() + 2 * pad) / g.cell)), 1, 4096);
  g.cell = std::max((ext.x() + 2 * pad) / g.nx, (ext.y() + 2 * pad) / g.ny);

  auto cell_range = [&](double a, double b, double o, int n) {
    const int i0 = std::clamp(static_cast<int>(std::floor((a - pad - o) / g.cell)), 0, n - 1);
    const int i1 = std::clamp(static_cast<int>(std::floor((b + pad - o) / g.cell)), 0, n - 1);
    return std::pair{i0, i1};
  };

  std::vector<std::pair<int, int>> entries;  // (cell, face)
  for (int f = 0; f < F.rows(); ++f) {
    double x0 = V(F(f, 0), 0), x1 = x0, y0 = V(F(f, 0), 1), y1 = y0;
    for (int k = 1; k < 3; ++k) {
      x0 = std::min(x0, V(F(f, k), 0));
      x1 = std::max(x1, V(F(f, k), 0));
      y0 = std::min(y0, V(F(f, k), 1));
      y1 = std::max(y1, V(F(f, k), 1));
    }
    const auto [ix0, ix1] = cell_range(x0, x1, g.origin.x(), g.nx);
    const auto [iy0, iy1] = cell_range(y0, y1, g.origin.y(), g.ny);
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix) entries.emplace_back(iy * g.nx + ix, f);
  }
  std::sort(entries.begin(), entries.end());
  g.offsets.assign(static_cast<std::size_t>(g.nx) * g.ny + 1, 0);
  g.faces.reserve(entries.size());
  for (const auto& [c, f] : entries) {
    ++g.offsets[c + 1];
    g.faces.push_back(f);
  }
  std::partial_sum(g.offsets.begin(), g.offsets.end(), g.offsets.begin());
  return g;
}

}  // namespace

std::optional<int> FaceGrid::cell_of(const Eigen::Vector2d& p) const {
  const double fx = (p.x() - origin.x()) / cell;
  const double fy = (p.y() - origin.y()) / cell;
  if (!(fx >= 0.0 && fy >= 0.0 && fx <= nx && fy <= ny)) return std::nullopt;
  const int ix = std::min(static_cast<int>(fx), nx - 1);
  const int iy = std::min(static_cast<int>(fy), ny - 1);
  return iy * nx + ix;
}

ValidationReport TriMesh::validate(const Points2d& V, const Faces& F_in) {
  ValidationReport rep;
  auto issue = [&](const std::string& s) { rep.issues.push_back(s); };

  if (V.rows() < 3) issue("mesh needs at least 3 vertices");
  if (F_in.rows() < 1) issue("mesh needs at least 1 face");
  if (!rep.ok()) return rep;
  if (!V.allFinite()) issue("non-finite vertex coordinate");

  for (int f = 0; f < F_in.rows(); ++f) {
    for (int k = 0; k < 3; ++k)
      if (F_in(f, k) < 0 || F_in(f, k) >= V.rows()) {
        issue("face " + std::to_string(f) + " references vertex out of range");
        return rep;
      }
    if (F_in(f, 0) == F_in(f, 1) || F_in(f, 1) == F_in(f, 2) || F_in(f, 0) == F_in(f, 2))
      issue("face " + std::to_string(f) + " repeats a vertex");
  }
  if (!rep.ok()) return rep;

  Faces F = F_in;
  const double diag = bbox_diagonal(V);
  const double tiny = 1e-14 * diag * diag;
  std::vector<int> cw, degenerate;
  for (int f = 0; f < F.rows(); ++f) {
    const double d = double_area(Complex(V(F(f, 0), 0), V(F(f, 0), 1)),
                                 Complex(V(F(f, 1), 0), V(F(f, 1), 1)),
                                 Complex(V(F(f, 2), 0), V(F(f, 2), 1)));
    if (std::abs(d) <= tiny || !std::isfinite(d))
      degenerate.push_back(f);
    else if (d < 0)
      cw.push_back(f);
  }
  for (int f : degenerate) issue("degenerate face " + std::to_string(f));
  const auto oriented = static_cast<std::size_t>(F.rows()) - degenerate.size();
  if (!cw.empty() && cw.size() == oriented) {
    F.col(1).swap(F.col(2));
    rep.reoriented = true;
  } else if (!cw.empty()) {
    std::ostringstream os;
    os << "mixed orientation: " << cw.size() << " clockwise face(s), first " << cw.front();
    issue(os.str());
  }

  const auto h = half_edges(F);
  for (std::size_t i = 1; i < h.size(); ++i)
    if (h[i].from == h[i - 1].from && h[i].to == h[i - 1].to)
      issue("edge (" + std::to_string(h[i].from) + "," + std::to_string(h[i].to) +
            ") used twice in the same direction (faces " + std::to_string(h[i - 1].face) + ", " +
            std::to_string(h[i].face) + ")");

  std::vector<int> parent(F.rows());
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> neighbours(F.rows(), 0);
  for (const auto& e : h) {
    auto it = std::lower_bound(h.begin(), h.end(), HalfEdge{e.to, e.from, -1}, less_directed);
    for (; it != h.end() && it->from == e.to && it->to == e.from; ++it) {
      ++neighbours[e.face];
      parent[find_root(parent, e.face)] = find_root(parent, it->face);
    }
  }
  if (F.rows() > 1)
    for (int f = 0; f < F.rows(); ++f)
      if (neighbours[f] == 0) issue("dangling triangle: face " + std::to_string(f) + " shares no edge");
  int components = 0;
  for (int f = 0; f < F.rows(); ++f) components += find_root(parent, f) == f;
  if (components > 1) issue("mesh is not edge-connected (" + std::to_string(components) + " components)");

  std::vector<int> used(V.rows(), 0), boundary_out(V.rows(), 0);
  for (int f = 0; f < F.rows(); ++f)
    for (int k = 0; k < 3; ++k) used[F(f, k)] = 1;
  for (int v = 0; v < V.rows(); ++v)
    if (!used[v]) issue("vertex " + std::to_string(v) + " is not referenced by any face");
  for (const auto& e : h)
    if (!has_directed(h, e.to, e.from)) ++boundary_out[e.from];
  for (int v = 0; v < V.rows(); ++v)
    if (boundary_out[v] > 1) issue("non-manifold boundary vertex " + std::to_string(v));
  return rep;
}

TriMesh::TriMesh(Points2d vertices, Faces faces) : V_(std::move(vertices)), F_(std::move(faces)) {
  const auto rep = validate(V_, F_);
  if (!rep.ok()) {
    std::ostringstream os;
    os << "invalid mesh:";
    for (const auto& s : rep.issues) os << "\n  " << s;
    throw ValidationError(os.str());
  }
  if (rep.reoriented) {
    F_.col(1).swap(F_.col(2));
    reoriented_ = true;
  }
  dT_.resize(F_.rows());
  for (int f = 0; f < F_.rows(); ++f) dT_[f] = double_area(vertex(F_(f, 0)), vertex(F_(f, 1)), vertex(F_(f, 2)));
  scale_ = bbox_diagonal(V_);
  loops_ = trace_loops(V_, F_, half_edges(F_));
  grid_ = build_grid(V_, F_);
}

Eigen::Vector3d barycentric(const TriMesh& mesh, int face, const Eigen::Vector2d& p) {
  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  const double x1 = V(F(face, 0), 0), y1 = V(F(face, 0), 1);
  const double e1x = V(F(face, 1), 0) - x1, e1y = V(F(face, 1), 1) - y1;
  const double e2x = V(F(face, 2), 0) - x1, e2y = V(F(face, 2), 1) - y1;
  const double dx = p.x() - x1, dy = p.y() - y1;
  const double det = e1x * e2y - e1y * e2x;
  const double a = (dx * e2y - dy * e2x) / det;
  const double b = (e1x * dy - e1y * dx) / det;
  return {1.0 - a - b, a, b};
}

namespace {

bool contains(const Eigen::Vector3d& l) { return l.minCoeff() >= -kContainTol; }

BaryLocation full_scan(const TriMesh& mesh, const Eigen::Vector2d& p) {
  BaryLocation best;
  double best_sum = std::numeric_limits<double>::infinity();
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto l = barycentric(mesh, f, p);
    if (contains(l)) return {f, l};
    const double s = l.cwiseAbs().sum();
    if (s < best_sum) {
      best_sum = s;
      best = {f, l};
    }
  }
  return best;
}

}  // namespace

std::optional<BaryLocation> find_containing(const TriMesh& mesh, const Eigen::Vector2d& p) {
  const auto& g = mesh.grid();
  const auto c = g.cell_of(p);
  if (!c) return std::nullopt;
  // Faces within a cell are sorted by index, so the first hit is the lowest-index one.
  for (int i = g.offsets[*c]; i < g.offsets[*c + 1]; ++i) {
    const int f = g.faces[i];
    const auto l = barycentric(mesh, f, p);
    if (contains(l)) return BaryLocation{f, l};
  }
  return std::nullopt;
}

BaryLocation locate(const TriMesh& mesh, const Eigen::Vector2d& p) {
  if (mesh.grid().cell_of(p)) {
    if (auto hit = find_containing(mesh, p)) return *hit;
  }
  return full_scan(mesh, p);
}

RowSparseMatrixd build_interp(const TriMesh& source, const Points2d& targets) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * targets.rows());
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    const auto loc = locate(source, Eigen::Vector2d(targets(i, 0), targets(i, 1)));
    for (int k = 0; k < 3; ++k)
      if (loc.lambda[k] != 0.0) trip.emplace_back(static_cast<int>(i), source.faces()(loc.face, k), loc.lambda[k]);
  }
  RowSparseMatrixd R(targets.rows(), source.n_vertices());
  R.setFromTriplets(trip.begin(), trip.end());
  return R;
}

int face_components(const TriMesh& mesh, const std::vector<int>& faces) {
  const Faces& F = mesh.faces();
  std::vector<int> slot(F.rows(), -1);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (faces[i] < 0 || faces[i] >= F.rows()) throw InputError("face_components: face index out of range");
    slot[faces[i]] = static_cast<int>(i);
  }
  std::vector<int> parent(faces.size());
  std::iota(parent.begin(), parent.end(), 0);
  const auto h = half_edges(F);
  for (const auto& e : h) {
    if (slot[e.face] < 0) continue;
    auto it = std::lower_bound(h.begin(), h.end(), HalfEdge{e.to, e.from, -1}, less_directed);
    for (; it != h.end() && it->from == e.to && it->to == e.from; ++it)
      if (slot[it->face] >= 0) parent[find_root(parent, slot[e.face])] = find_root(parent, slot[it->face]);
  }
  int n = 0;
  for (std::size_t i = 0; i < faces.size(); ++i) n += find_root(parent, static_cast<int>(i)) == static_cast<int>(i);
  return n;
}

SplitResult split_face(const TriMesh& mesh, int face, const Eigen::Vector3d& alpha) {
  if (face < 0 || face >= mesh.n_faces()) throw InputError("split_face: face index out of range");
  if (!(alpha.minCoeff() > 0.0) || std::abs(alpha.sum() - 1.0) > 1e-12)
    throw InvalidWeights("split_face: weights must be positive and sum to 1");

  const auto& F = mesh.faces();
  const int n = static_cast<int>(mesh.n_vertices());
  const int v1 = F(face, 0), v2 = F(face, 1), v3 = F(face, 2);

  Points2d V(n + 1, 2);
  V.topRows(n) = mesh.vertices();
  V.row(n) = alpha[0] * mesh.vertices().row(v1) + alpha[1] * mesh.vertices().row(v2) +
             alpha[2] * mesh.vertices().row(v3);

  Faces G(F.rows() + 2, 3);
  G.topRows(F.rows()) = F;
  G.row(face) << n, v2, v3;
  G.row(F.rows()) << v1, n, v3;
  G.row(F.rows() + 1) << v1, v2, n;
  return {TriMesh(std::move(V), std::move(G)), n};
}

}  // namespace qcmap
