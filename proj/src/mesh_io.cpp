#include "qcmap/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <fmt/format.h>
#include <fmt/os.h>

namespace qcmap {

namespace {

constexpr double kPlanarTol = 1e-9;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

// Next line that is not blank and not a comment.
bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

void check_planar(double z, std::size_t vertex, const std::string& path) {
  if (std::abs(z) > kPlanarTol)
    throw ValidationError(fmt::format("{}: vertex {} has z = {} (planar input required)", path, vertex, z));
}

RawMesh pack(const std::vector<double>& xy, const std::vector<int>& idx) {
  RawMesh m;
  m.vertices.resize(static_cast<Eigen::Index>(xy.size() / 2), 2);
  for (std::size_t i = 0; i < xy.size() / 2; ++i) {
    m.vertices(i, 0) = xy[2 * i];
    m.vertices(i, 1) = xy[2 * i + 1];
  }
  m.faces.resize(static_cast<Eigen::Index>(idx.size() / 3), 3);
  for (std::size_t i = 0; i < idx.size() / 3; ++i)
    for (int k = 0; k < 3; ++k) m.faces(i, k) = idx[3 * i + k];
  return m;
}

RawMesh read_off(const std::string& path) {
  auto in = open_or_throw(path);
  std::string line;
  if (!next_content_line(in, line)) throw ParseError(path + ": empty file");
  std::istringstream head(line);
  std::string magic;
  head >> magic;
  if (magic != "OFF") throw ParseError(path + ": missing OFF header");
  long nv = -1, nf = -1, ne = 0;
  if (!(head >> nv)) {
    if (!next_content_line(in, line)) throw ParseError(path + ": missing counts");
    head = std::istringstream(line);
    head >> nv;
  }
  if (!(head >> nf)) throw ParseError(path + ": malformed counts line");
  head >> ne;
  if (nv < 0 || nf < 0) throw ParseError(path + ": negative counts");

  std::vector<double> xy;
  xy.reserve(2 * nv);
  for (long i = 0; i < nv; ++i) {
    if (!next_content_line(in, line)) throw ParseError(fmt::format("{}: expected {} vertices, got {}", path, nv, i));
    std::istringstream ls(line);
    double x, y, z = 0.0;
    if (!(ls >> x >> y)) throw ParseError(fmt::format("{}: bad vertex line {}", path, i));
    if (ls >> z) check_planar(z, i, path);
    if (!std::isfinite(x) || !std::isfinite(y)) throw ParseError(fmt::format("{}: non-finite vertex {}", path, i));
    xy.push_back(x);
    xy.push_back(y);
  }
  std::vector<int> idx;
  idx.reserve(3 * nf);
  for (long i = 0; i < nf; ++i) {
    if (!next_content_line(in, line)) throw ParseError(fmt::format("{}: expected {} faces, got {}", path, nf, i));
    std::istringstream ls(line);
    int k, a, b, c;
    if (!(ls >> k)) throw ParseError(fmt::format("{}: bad face line {}", path, i));
    if (k != 3) throw ParseError(fmt::format("{}: face {} has {} vertices (triangles only)", path, i, k));
    if (!(ls >> a >> b >> c)) throw ParseError(fmt::format("{}: bad face line {}", path, i));
    idx.insert(idx.end(), {a, b, c});
  }
  return pack(xy, idx);
}

RawMesh read_obj(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<double> xy;
  std::vector<int> idx;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z = 0.0;
      if (!(ls >> x >> y)) throw ParseError(fmt::format("{}:{}: bad vertex", path, lineno));
      if (ls >> z) check_planar(z, xy.size() / 2, path);
      if (!std::isfinite(x) || !std::isfinite(y)) throw ParseError(fmt::format("{}:{}: non-finite vertex", path, lineno));
      xy.push_back(x);
      xy.push_back(y);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        // "i", "i/t", "i//n" or "i/t/n"; only the position index matters.
        const auto slash = tok.find('/');
        long v;
        try {
          v = std::stol(tok.substr(0, slash));
        } catch (const std::exception&) {
          throw ParseError(fmt::format("{}:{}: bad face index '{}'", path, lineno, tok));
        }
        const long nv = static_cast<long>(xy.size() / 2);
        poly.push_back(static_cast<int>(v > 0 ? v - 1 : nv + v));
      }
      if (poly.size() != 3)
        throw ParseError(fmt::format("{}:{}: face has {} vertices (triangles only)", path, lineno, poly.size()));
      idx.insert(idx.end(), poly.begin(), poly.end());
    }
  }
  return pack(xy, idx);
}

}  // namespace

MeshFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const auto ext = dot == std::string::npos ? std::string() : lower(path.substr(dot + 1));
  if (ext == "off") return MeshFormat::OFF;
  if (ext == "obj") return MeshFormat::OBJ;
  throw InputError("unknown mesh format for " + path + " (expected .off or .obj)");
}

RawMesh read_mesh_raw(const std::string& path, MeshFormat format) {
  return format == MeshFormat::OFF ? read_off(path) : read_obj(path);
}

RawMesh read_mesh_raw(const std::string& path) { return read_mesh_raw(path, format_from_path(path)); }

TriMesh load_mesh(const std::string& path, MeshFormat format) {
  auto raw = read_mesh_raw(path, format);
  return TriMesh(std::move(raw.vertices), std::move(raw.faces));
}

TriMesh load_mesh(const std::string& path) { return load_mesh(path, format_from_path(path)); }

void write_mesh(const std::string& path, const Points2d& V, const Faces& F, MeshFormat format) {
  auto out = fmt::output_file(path);
  if (format == MeshFormat::OFF) {
    out.print("OFF\n{} {} 0\n", V.rows(), F.rows());
    for (Eigen::Index i = 0; i < V.rows(); ++i) out.print("{} {} 0\n", V(i, 0), V(i, 1));
    for (Eigen::Index i = 0; i < F.rows(); ++i) out.print("3 {} {} {}\n", F(i, 0), F(i, 1), F(i, 2));
  } else {
    for (Eigen::Index i = 0; i < V.rows(); ++i) out.print("v {} {} 0\n", V(i, 0), V(i, 1));
    for (Eigen::Index i = 0; i < F.rows(); ++i) out.print("f {} {} {}\n", F(i, 0) + 1, F(i, 1) + 1, F(i, 2) + 1);
  }
}

void write_mesh(const std::string& path, const Points2d& V, const Faces& F) {
  write_mesh(path, V, F, format_from_path(path));
}

}  // namespace qcmap
