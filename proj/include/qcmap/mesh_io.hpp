#pragma once

#include <string>

#include "qcmap/mesh.hpp"

namespace qcmap {

enum class MeshFormat { OFF, OBJ };

/// Format from the file extension (.off / .obj, case-insensitive); throws InputError otherwise.
MeshFormat format_from_path(const std::string& path);

/// Vertex and face arrays as read from disk, before validation.
struct RawMesh {
  Points2d vertices;
  Faces faces;
};

/// Parses a triangle mesh. Throws ParseError on malformed input and ValidationError when a
/// third coordinate exceeds 1e-9 in magnitude.
RawMesh read_mesh_raw(const std::string& path, MeshFormat format);
RawMesh read_mesh_raw(const std::string& path);

TriMesh load_mesh(const std::string& path, MeshFormat format);
TriMesh load_mesh(const std::string& path);

/// Writes vertices (z = 0) and 0-based faces as OFF, or 1-based as OBJ.
void write_mesh(const std::string& path, const Points2d& vertices, const Faces& faces, MeshFormat format);
void write_mesh(const std::string& path, const Points2d& vertices, const Faces& faces);

}  // namespace qcmap
