#include "hemomesh/obj_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hemomesh {

namespace {

// Strip a face index token like "12/3/4" down to its vertex index.
int parse_face_index(const std::string& tok, int nv) {
  const auto slash = tok.find('/');
  const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
  int idx = 0;
  try {
    idx = std::stoi(head);
  } catch (...) {
    throw IoError("OBJ: bad face index '" + tok + "'");
  }
  if (idx < 0) idx = nv + 1 + idx;  // negative indices count from the end
  if (idx < 1 || idx > nv)
    throw IoError("OBJ: face index out of range: " + tok);
  return idx - 1;
}

}  // namespace

TriangleMesh obj_from_string(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw IoError("OBJ: malformed vertex line");
      mesh.positions.emplace_back(x, y, z);
    } else if (kind == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok)
        idx.push_back(parse_face_index(tok, mesh.num_vertices()));
      if (idx.size() < 3) throw IoError("OBJ: face with fewer than 3 vertices");
      // Fan-triangulate polygons.
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // vt / vn / o / g / usemtl etc. are ignored.
  }
  if (mesh.positions.empty()) throw IoError("OBJ: no vertices found");
  return mesh;
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open OBJ file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return obj_from_string(buf.str());
}

std::string obj_to_string(const TriangleMesh& mesh) {
  std::string out;
  out.reserve(mesh.positions.size() * 48 + mesh.triangles.size() * 24);
  char line[128];
  for (const auto& p : mesh.positions) {
    std::snprintf(line, sizeof(line), "v %.17g %.17g %.17g\n", p.x(), p.y(),
                  p.z());
    out += line;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(line, sizeof(line), "f %d %d %d\n", t[0] + 1, t[1] + 1,
                  t[2] + 1);
    out += line;
  }
  return out;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write OBJ file: " + path);
  out << obj_to_string(mesh);
  if (!out) throw IoError("failed while writing OBJ file: " + path);
}

}  // namespace hemomesh
