#include "hemomesh/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hemomesh/geodesy.hpp"
#include "hemomesh/obj_io.hpp"

namespace fs = std::filesystem;

namespace hemomesh {

namespace {

void write_f32_raw(const std::string& path, const float* data,
                   std::size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write field file: " + path);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * 4));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &data[i], 4);
      unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                            static_cast<unsigned char>((bits >> 8) & 0xff),
                            static_cast<unsigned char>((bits >> 16) & 0xff),
                            static_cast<unsigned char>((bits >> 24) & 0xff)};
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!out) throw IoError("failed writing field file: " + path);
}

std::vector<float> read_f32_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot read field file: " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 4 != 0)
    throw IoError("field file size is not a multiple of 4: " + path);
  in.seekg(0);
  std::vector<float> data(bytes / 4);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("failed reading field file: " + path);
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& f : data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      bits = __builtin_bswap32(bits);
      std::memcpy(&f, &bits, 4);
    }
  }
  return data;
}

}  // namespace

void write_field_f32(const std::string& path, const Field3& field) {
  std::vector<float> flat(field.size() * 3);
  for (std::size_t v = 0; v < field.size(); ++v)
    for (int d = 0; d < 3; ++d)
      flat[v * 3 + d] = static_cast<float>(field[v][d]);
  write_f32_raw(path, flat.data(), flat.size());
}

Field3 read_field_f32(const std::string& path, int expected_vertices) {
  const auto data = read_f32_raw(path);
  if (data.size() != static_cast<std::size_t>(expected_vertices) * 3)
    throw IoError("field file " + path + " holds " +
                  std::to_string(data.size() / 3) + " vectors, expected " +
                  std::to_string(expected_vertices));
  Field3 field(expected_vertices);
  for (int v = 0; v < expected_vertices; ++v)
    field[v] = Vec3(data[v * 3], data[v * 3 + 1], data[v * 3 + 2]);
  return field;
}

void write_scalar_f32(const std::string& path,
                      const std::vector<double>& values) {
  std::vector<float> flat(values.begin(), values.end());
  write_f32_raw(path, flat.data(), flat.size());
}

std::vector<double> read_scalar_f32(const std::string& path) {
  const auto data = read_f32_raw(path);
  return std::vector<double>(data.begin(), data.end());
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot hash file: " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::string buf(bytes, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(bytes));
  return hex64(fnv1a(buf.data(), buf.size()));
}

std::vector<int> DatasetManifest::split_indices(
    const std::string& split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["kind"] = m.kind;
  j["seed"] = m.seed;
  j["edge_length"] = m.edge_length;
  j["units"] = {{"position", m.units_position}, {"wss", m.units_wss}};
  j["feature_layout"] = m.feature_layout;
  j["samples"] = nlohmann::json::array();
  for (const auto& s : m.samples) {
    nlohmann::json e;
    e["id"] = s.id;
    e["dir"] = s.dir;
    e["mesh"] = s.mesh_file;
    e["wss"] = s.wss_file;
    e["spec"] = s.spec_file;
    e["split"] = s.split;
    e["seed"] = s.seed;
    e["vertices"] = s.vertex_count;
    e["triangles"] = s.triangle_count;
    e["mesh_hash"] = s.mesh_hash;
    e["wss_hash"] = s.wss_hash;
    e["spec_hash"] = s.spec_hash;
    e["inlet"] = {{"anchor", s.inlet_anchor}, {"size", s.inlet_size}};
    e["outlets"] = nlohmann::json::array();
    for (const auto& [anchor, size] : s.outlet_anchors)
      e["outlets"].push_back({{"anchor", anchor}, {"size", size}});
    j["samples"].push_back(std::move(e));
  }
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1)
    throw IoError("unsupported manifest format version " +
                  std::to_string(m.format_version));
  m.kind = j.at("kind").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.edge_length = j.at("edge_length").get<double>();
  m.units_position = j.at("units").at("position").get<std::string>();
  m.units_wss = j.at("units").at("wss").get<std::string>();
  m.feature_layout = j.at("feature_layout").get<std::string>();
  for (const auto& e : j.at("samples")) {
    ManifestSample s;
    s.id = e.at("id").get<std::string>();
    s.dir = e.at("dir").get<std::string>();
    s.mesh_file = e.at("mesh").get<std::string>();
    s.wss_file = e.at("wss").get<std::string>();
    s.spec_file = e.at("spec").get<std::string>();
    s.split = e.at("split").get<std::string>();
    s.seed = e.at("seed").get<std::uint64_t>();
    s.vertex_count = e.at("vertices").get<int>();
    s.triangle_count = e.at("triangles").get<int>();
    s.mesh_hash = e.at("mesh_hash").get<std::string>();
    s.wss_hash = e.at("wss_hash").get<std::string>();
    s.spec_hash = e.at("spec_hash").get<std::string>();
    s.inlet_anchor = e.at("inlet").at("anchor").get<int>();
    s.inlet_size = e.at("inlet").at("size").get<int>();
    for (const auto& o : e.at("outlets"))
      s.outlet_anchors.emplace_back(o.at("anchor").get<int>(),
                                    o.at("size").get<int>());
    m.samples.push_back(std::move(s));
  }
  return m;
}

}  // namespace

DatasetManifest write_dataset(const std::string& dir,
                              const std::vector<GeneratedSample>& samples,
                              DatasetKind kind, std::uint64_t seed,
                              double edge_length) {
  fs::create_directories(dir);
  DatasetManifest manifest;
  manifest.kind = kind == DatasetKind::single ? "single" : "bifurcating";
  manifest.seed = seed;
  manifest.edge_length = edge_length;

  for (const auto& g : samples) {
    ManifestSample entry;
    entry.id = g.id;
    entry.dir = g.id;
    entry.mesh_file = "mesh.obj";
    entry.wss_file = "wss.f32";
    entry.spec_file = "spec.json";
    entry.split = g.split;
    entry.seed = g.seed;
    entry.vertex_count = g.mesh.num_vertices();
    entry.triangle_count = g.mesh.num_triangles();

    const fs::path sdir = fs::path(dir) / g.id;
    fs::create_directories(sdir);
    write_obj(g.mesh, (sdir / "mesh.obj").string());
    write_field_f32((sdir / "wss.f32").string(), g.wss.vectors);
    {
      std::ofstream spec(sdir / "spec.json", std::ios::binary);
      spec << g.spec_json;
    }
    // Optional inlet-distance cache.
    const auto graph = build_adjacency(g.mesh);
    const auto inlet = inlet_distance_feature(g.mesh, graph);
    write_scalar_f32((sdir / "inletdist.f32").string(), inlet.dist);

    for (const auto& loop : g.mesh.boundary_loops) {
      const int anchor =
          *std::min_element(loop.vertices.begin(), loop.vertices.end());
      if (loop.tag == LoopTag::inlet) {
        entry.inlet_anchor = anchor;
        entry.inlet_size = static_cast<int>(loop.vertices.size());
      } else if (loop.tag == LoopTag::outlet) {
        entry.outlet_anchors.emplace_back(
            anchor, static_cast<int>(loop.vertices.size()));
      }
    }
    std::sort(entry.outlet_anchors.begin(), entry.outlet_anchors.end());
    entry.mesh_hash = file_hash_hex((sdir / "mesh.obj").string());
    entry.wss_hash = file_hash_hex((sdir / "wss.f32").string());
    entry.spec_hash = file_hash_hex((sdir / "spec.json").string());
    manifest.samples.push_back(std::move(entry));
  }

  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest under " + dir);
  out << manifest_to_json(manifest).dump(2) << "\n";
  return manifest;
}

DatasetManifest read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad manifest JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

void apply_loop_tags(TriangleMesh* mesh, const ManifestSample& entry) {
  const auto loops = trace_boundary_loops(*mesh);
  mesh->boundary_loops.clear();
  for (const auto& loop : loops) {
    const int anchor = *std::min_element(loop.begin(), loop.end());
    BoundaryLoop bl;
    bl.vertices = loop;
    bl.tag = LoopTag::untagged;
    if (anchor == entry.inlet_anchor &&
        static_cast<int>(loop.size()) == entry.inlet_size) {
      bl.tag = LoopTag::inlet;
    } else {
      for (const auto& [oa, os] : entry.outlet_anchors)
        if (anchor == oa && static_cast<int>(loop.size()) == os)
          bl.tag = LoopTag::outlet;
    }
    mesh->boundary_loops.push_back(std::move(bl));
  }
}

LoadedSample load_sample(const std::string& dataset_dir,
                         const DatasetManifest& manifest, int index,
                         bool verify_hashes) {
  if (index < 0 || index >= static_cast<int>(manifest.samples.size()))
    throw ConfigError("load_sample: index out of range");
  const ManifestSample& entry = manifest.samples[index];
  const fs::path sdir = fs::path(dataset_dir) / entry.dir;
  const std::string mesh_path = (sdir / entry.mesh_file).string();
  const std::string wss_path = (sdir / entry.wss_file).string();
  if (verify_hashes) {
    if (file_hash_hex(mesh_path) != entry.mesh_hash)
      throw IoError("mesh hash mismatch for sample " + entry.id);
    if (file_hash_hex(wss_path) != entry.wss_hash)
      throw IoError("wss hash mismatch for sample " + entry.id);
  }
  LoadedSample s;
  s.mesh = read_obj(mesh_path);
  if (s.mesh.num_vertices() != entry.vertex_count)
    throw IoError("sample " + entry.id + " vertex count mismatch");
  apply_loop_tags(&s.mesh, entry);
  s.wss = read_field_f32(wss_path, entry.vertex_count);
  s.id = entry.id;
  s.split = entry.split;
  return s;
}

// ---------- PLY -------------------------------------------------------------

void export_ply(const std::string& path, const TriangleMesh& mesh,
                const Field3& field) {
  if (static_cast<int>(field.size()) != mesh.num_vertices())
    throw ConfigError("export_ply: field length does not match mesh");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PLY: " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.num_vertices() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float wss_x\nproperty float wss_y\nproperty float wss_z\n"
      << "property float wss_mag\n"
      << "element face " << mesh.num_triangles() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    float rec[7] = {static_cast<float>(mesh.positions[v].x()),
                    static_cast<float>(mesh.positions[v].y()),
                    static_cast<float>(mesh.positions[v].z()),
                    static_cast<float>(field[v].x()),
                    static_cast<float>(field[v].y()),
                    static_cast<float>(field[v].z()),
                    static_cast<float>(field[v].norm())};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
  for (const auto& t : mesh.triangles) {
    const unsigned char n = 3;
    out.write(reinterpret_cast<const char*>(&n), 1);
    const std::int32_t idx[3] = {t[0], t[1], t[2]};
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
  if (!out) throw IoError("failed writing PLY: " + path);
}

void import_ply(const std::string& path, TriangleMesh* mesh, Field3* field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PLY: " + path);
  std::string line;
  int nv = -1, nf = -1;
  std::getline(in, line);
  if (line != "ply") throw IoError("not a PLY file: " + path);
  std::getline(in, line);
  if (line != "format binary_little_endian 1.0")
    throw IoError("unsupported PLY format: " + line);
  while (std::getline(in, line) && line != "end_header") {
    if (line.rfind("element vertex ", 0) == 0) nv = std::stoi(line.substr(15));
    if (line.rfind("element face ", 0) == 0) nf = std::stoi(line.substr(13));
  }
  if (nv < 0 || nf < 0) throw IoError("PLY header missing elements: " + path);
  mesh->positions.resize(nv);
  mesh->triangles.resize(nf);
  field->resize(nv);
  for (int v = 0; v < nv; ++v) {
    float rec[7];
    in.read(reinterpret_cast<char*>(rec), sizeof(rec));
    if (!in) throw IoError("truncated PLY vertices: " + path);
    mesh->positions[v] = Vec3(rec[0], rec[1], rec[2]);
    (*field)[v] = Vec3(rec[3], rec[4], rec[5]);
    const double mag = (*field)[v].norm();
    if (std::abs(mag - rec[6]) > 1e-4 * std::max(1.0, mag))
      throw IoError("PLY magnitude property inconsistent at vertex " +
                    std::to_string(v));
  }
  for (int f = 0; f < nf; ++f) {
    unsigned char n;
    in.read(reinterpret_cast<char*>(&n), 1);
    if (!in || n != 3) throw IoError("PLY: non-triangle face");
    std::int32_t idx[3];
    in.read(reinterpret_cast<char*>(idx), sizeof(idx));
    mesh->triangles[f] = {idx[0], idx[1], idx[2]};
  }
}

}  // namespace hemomesh
