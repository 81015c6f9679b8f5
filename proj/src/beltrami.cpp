#include "qcmap/beltrami.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace qcmap {

double BeltramiField::sup_norm() const {
  double m = 0.0;
  if (per_vertex && per_vertex->size()) m = std::max(m, per_vertex->cwiseAbs().maxCoeff());
  if (per_face && per_face->size()) m = std::max(m, per_face->cwiseAbs().maxCoeff());
  return m;
}

VectorXc face_values(const TriMesh& mesh, const BeltramiField& field) {
  if (field.per_vertex) {
    if (field.per_vertex->size() != mesh.n_vertices())
      throw ShapeMismatch("per-vertex Beltrami field size does not match the mesh");
    return vertex_to_face(mesh, *field.per_vertex);
  }
  if (field.per_face) {
    if (field.per_face->size() != mesh.n_faces())
      throw ShapeMismatch("per-face Beltrami field size does not match the mesh");
    return *field.per_face;
  }
  throw InputError("Beltrami field has neither per_vertex nor per_face values");
}

namespace {

VectorXc from_json_array(const nlohmann::json& a, const std::string& key) {
  if (!a.is_array()) throw ParseError("'" + key + "' must be an array of [re, im] pairs");
  VectorXc v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& e = a[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ParseError("'" + key + "' entry " + std::to_string(i) + " is not a [re, im] pair");
    v[static_cast<Eigen::Index>(i)] = Complex(e[0].get<double>(), e[1].get<double>());
  }
  return v;
}

nlohmann::json to_json_array(const VectorXc& v) {
  auto a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back({v[i].real(), v[i].imag()});
  return a;
}

}  // namespace

BeltramiField read_beltrami_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  BeltramiField field;
  if (j.contains("per_vertex")) field.per_vertex = from_json_array(j["per_vertex"], "per_vertex");
  if (j.contains("per_face")) field.per_face = from_json_array(j["per_face"], "per_face");
  return field;
}

void write_beltrami_json(const std::string& path, const BeltramiField& field) {
  nlohmann::json j = nlohmann::json::object();
  if (field.per_vertex) j["per_vertex"] = to_json_array(*field.per_vertex);
  if (field.per_face) j["per_face"] = to_json_array(*field.per_face);
  std::ofstream(path) << j.dump() << '\n';
}

VectorXc read_complex_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<Complex> vals;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    for (auto& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    double re, im = 0.0;
    if (!(ls >> re)) {
      if (first) {
        first = false;
        continue;
      }
      throw ParseError(path + ": bad row '" + line + "'");
    }
    first = false;
    ls >> im;
    vals.emplace_back(re, im);
  }
  return Eigen::Map<VectorXc>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Eigen::Matrix<double, Eigen::Dynamic, 6> gradient_stencil(const TriMesh& mesh) {
  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  const auto& d = mesh.double_areas();
  Eigen::Matrix<double, Eigen::Dynamic, 6> S(F.rows(), 6);
  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    for (int j = 0; j < 3; ++j) {
      const int a = F(f, (j + 1) % 3), b = F(f, (j + 2) % 3);
      S(f, j) = (V(a, 1) - V(b, 1)) / d[f];
      S(f, 3 + j) = (V(b, 0) - V(a, 0)) / d[f];
    }
  }
  return S;
}

BcResult bc_from_map(const TriMesh& mesh, const VectorXc& image) {
  if (image.size() != mesh.n_vertices()) throw ShapeMismatch("bc_from_map: image size does not match the mesh");
  const auto grad = face_gradient(mesh, image);

  double image_scale = 0.0;
  if (image.size()) {
    const auto p = to_points(image);
    image_scale = (p.colwise().maxCoeff() - p.colwise().minCoeff()).norm();
  }
  const double threshold = 1e-14 * (mesh.scale() > 0 ? image_scale / mesh.scale() : 0.0);

  BcResult out;
  out.mu.resize(mesh.n_faces());
  const Complex I(0, 1);
  for (Eigen::Index f = 0; f < mesh.n_faces(); ++f) {
    const Complex fz = 0.5 * (grad(f, 0) - I * grad(f, 1));
    const Complex fzbar = 0.5 * (grad(f, 0) + I * grad(f, 1));
    if (std::abs(fz) <= threshold || std::abs(fz) == 0.0) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      out.mu[f] = Complex(nan, nan);
      out.degenerate.push_back(static_cast<int>(f));
    } else {
      out.mu[f] = fzbar / fz;
    }
  }
  return out;
}

VectorXc vertex_to_face(const TriMesh& mesh, const VectorXc& per_vertex) {
  if (per_vertex.size() != mesh.n_vertices()) throw ShapeMismatch("vertex_to_face: size does not match the mesh");
  const auto& F = mesh.faces();
  VectorXc out(F.rows());
  for (Eigen::Index f = 0; f < F.rows(); ++f)
    out[f] = (per_vertex[F(f, 0)] + per_vertex[F(f, 1)] + per_vertex[F(f, 2)]) / 3.0;
  return out;
}

VectorXc vertex_to_face_adjoint(const TriMesh& mesh, const VectorXc& per_face) {
  if (per_face.size() != mesh.n_faces()) throw ShapeMismatch("vertex_to_face_adjoint: size does not match the mesh");
  const auto& F = mesh.faces();
  VectorXc out = VectorXc::Zero(mesh.n_vertices());
  for (Eigen::Index f = 0; f < F.rows(); ++f)
    for (int j = 0; j < 3; ++j) out[F(f, j)] += per_face[f] / 3.0;
  return out;
}

VectorXc clamp_sup_norm(const VectorXc& mu, double bound) {
  if (!(bound > 0.0 && bound < 1.0)) throw InputError("clamp_sup_norm: bound must lie in (0, 1)");
  return mu.unaryExpr([bound](const Complex& m) {
    const double r = std::abs(m);
    return r > bound ? m * (bound / r) : m;
  });
}

BeltramiField clamp_sup_norm(const BeltramiField& field, double bound) {
  BeltramiField out;
  if (field.per_vertex) out.per_vertex = clamp_sup_norm(*field.per_vertex, bound);
  if (field.per_face) out.per_face = clamp_sup_norm(*field.per_face, bound);
  return out;
}

}  // namespace qcmap
