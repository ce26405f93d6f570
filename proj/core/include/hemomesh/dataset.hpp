#pragma once

#include <string>
#include <vector>

#include "hemomesh/artery.hpp"
#include "hemomesh/metrics.hpp"

namespace hemomesh {

// Raw little-endian float32 field files, vertex order = OBJ order.
void write_field_f32(const std::string& path, const Field3& field);
Field3 read_field_f32(const std::string& path, int expected_vertices);
void write_scalar_f32(const std::string& path,
                      const std::vector<double>& values);
std::vector<double> read_scalar_f32(const std::string& path);

// One dataset entry as recorded in the manifest.
struct ManifestSample {
  std::string id;
  std::string dir;          // relative to the dataset root
  std::string mesh_file;    // mesh.obj
  std::string wss_file;     // wss.f32
  std::string spec_file;    // spec.json
  std::string split;
  std::uint64_t seed = 0;
  int vertex_count = 0;
  int triangle_count = 0;
  std::string mesh_hash, wss_hash, spec_hash;
  // Boundary-loop tags (not stored in the OBJ): anchor vertex + length.
  int inlet_anchor = -1, inlet_size = 0;
  std::vector<std::pair<int, int>> outlet_anchors;
};

struct DatasetManifest {
  int format_version = 1;
  std::string kind;  // single | bifurcating
  std::uint64_t seed = 0;
  double edge_length = 0.0;
  std::string units_position = "mm";
  std::string units_wss = "Pa";
  std::string feature_layout =
      "flattened: D(9) N(9) X(9) row-major + inlet distance [mm]; "
      "irreps per matrix: 3x rho0, 2x rho1, 1x rho2";
  std::vector<ManifestSample> samples;

  std::vector<int> split_indices(const std::string& split) const;
};

// Writes samples + manifest.json under `dir` (one subdirectory per sample:
// mesh.obj, wss.f32, inletdist.f32, spec.json).
DatasetManifest write_dataset(const std::string& dir,
                              const std::vector<GeneratedSample>& samples,
                              DatasetKind kind, std::uint64_t seed,
                              double edge_length);

DatasetManifest read_manifest(const std::string& dir);

// Loads one sample: mesh with tagged boundary loops + WSS target.
struct LoadedSample {
  TriangleMesh mesh;
  Field3 wss;
  std::string id;
  std::string split;
};

LoadedSample load_sample(const std::string& dataset_dir,
                         const DatasetManifest& manifest, int index,
                         bool verify_hashes = true);

// Re-applies manifest loop tags to a freshly read mesh.
void apply_loop_tags(TriangleMesh* mesh, const ManifestSample& entry);

// PLY export/import with per-vertex wss vector + magnitude properties
// (binary little endian). Import returns mesh + field and checks magnitude.
void export_ply(const std::string& path, const TriangleMesh& mesh,
                const Field3& field);
void import_ply(const std::string& path, TriangleMesh* mesh, Field3* field);

std::string file_hash_hex(const std::string& path);

}  // namespace hemomesh
