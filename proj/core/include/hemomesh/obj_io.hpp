#pragma once

#include <string>

#include "hemomesh/mesh.hpp"

namespace hemomesh {

// Wavefront OBJ, v/f records only, 1-based indices. Boundary-loop tags are
// not stored in the OBJ; they live in the dataset manifest.
TriangleMesh read_obj(const std::string& path);
void write_obj(const TriangleMesh& mesh, const std::string& path);

std::string obj_to_string(const TriangleMesh& mesh);
TriangleMesh obj_from_string(const std::string& text);

}  // namespace hemomesh
