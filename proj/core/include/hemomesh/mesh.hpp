#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hemomesh/common.hpp"

namespace hemomesh {

using Vec3 = Eigen::Vector3d;

enum class LoopTag { untagged, inlet, outlet };

struct BoundaryLoop {
  std::vector<int> vertices;  // closed chain, no repeated vertex
  LoopTag tag = LoopTag::untagged;
};

// Manifold-with-boundary triangle surface. Positions in millimetres,
// triangles counterclockwise as seen from outside.
struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryLoop> boundary_loops;

  int num_vertices() const { return static_cast<int>(positions.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }

  const BoundaryLoop* inlet_loop() const {
    for (const auto& l : boundary_loops)
      if (l.tag == LoopTag::inlet) return &l;
    return nullptr;
  }
};

// Edge-graph view of a mesh. Neighbor lists are sorted ascending so every
// construction downstream (gauges, attention order, Dijkstra ties) is
// reproducible. qlengths are edge lengths quantized to kGeoQuantum; all
// combinatorial selections use them so that rigid motions cannot perturb
// tie-breaking through float round-off.
struct AdjacencyGraph {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> lengths;          // mm
  std::vector<std::vector<std::int64_t>> qlengths;   // units of kGeoQuantum

  int num_vertices() const { return static_cast<int>(neighbors.size()); }
  int degree(int v) const { return static_cast<int>(neighbors[v].size()); }
};

// Geodesic length quantum: 2^-20 mm. Quantized edge lengths are exact
// integers, so shortest-path arithmetic is exact and rotation-stable.
constexpr double kGeoQuantum = 9.5367431640625e-07;  // 2^-20 mm

struct ValidationReport {
  bool ok = false;
  bool manifold = true;
  bool consistent_winding = true;
  bool no_degenerate_triangles = true;
  bool valid_indices = true;
  bool loops_tagged = true;  // exactly one inlet, >= 1 outlet, loops match
  std::vector<std::string> issues;

  std::string summary() const;
};

// Report-only structural check of every TriangleMesh invariant.
ValidationReport validate(const TriangleMesh& mesh);

// Throws MeshError on degenerate triangles or non-manifold edges.
AdjacencyGraph build_adjacency(const TriangleMesh& mesh);

// Area-weighted vertex normals, unit length. Throws MeshError when the
// accumulated normal vanishes (fold-back geometry).
std::vector<Vec3> vertex_normals(const TriangleMesh& mesh);

// All q != p with |pos(q)-pos(p)| <= radius, ascending; falls back to the
// one-ring when the ball is empty.
std::vector<int> ball_neighbors(const TriangleMesh& mesh,
                                const AdjacencyGraph& graph, int p,
                                double radius);

// Uniform-grid accelerator for repeated ball queries over a whole mesh.
class BallIndex {
 public:
  BallIndex(const TriangleMesh& mesh, double cell_size);
  // Vertices with |pos(q)-pos(p)| <= radius, q != p, ascending.
  std::vector<int> query(const TriangleMesh& mesh, int p, double radius) const;

 private:
  std::int64_t cell_key(const Vec3& p) const;
  double cell_;
  Vec3 origin_;
  std::vector<std::pair<std::int64_t, int>> cells_;  // sorted (key, vertex)
};

double mean_edge_length(const AdjacencyGraph& graph);

// Boundary loops recomputed from connectivity (untagged). Deterministic:
// each loop starts at its smallest vertex, loops ordered by that vertex.
std::vector<std::vector<int>> trace_boundary_loops(const TriangleMesh& mesh);

// Generation-side helper: re-orients triangles by flood fill so winding is
// globally consistent, then flips the whole component so normals point away
// from `interior_hint` on average. Throws MeshError if non-orientable.
void orient_consistently(TriangleMesh& mesh, const Vec3& interior_hint);

}  // namespace hemomesh
