#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "hemomesh/mesh.hpp"

namespace hemomesh {

// Shortest-path distances over the edge graph. Distances are computed on
// quantized integer edge lengths (kGeoQuantum) so results are exact,
// deterministic, and invariant under rigid motion of the mesh.
struct DistanceField {
  std::vector<double> dist;          // mm; +inf when unreachable
  std::vector<char> reachable;
  std::vector<int> sources;
  int unreachable_count = 0;
};

constexpr std::int64_t kGeoInf = std::numeric_limits<std::int64_t>::max() / 4;

// Multi-source Dijkstra core. `owner[v]` is the source that realizes the
// distance (ties resolved toward the smaller source index); `pred[v]` is the
// predecessor on the shortest path (-1 at sources and unreachable vertices).
struct GeodesicResult {
  std::vector<std::int64_t> qdist;
  std::vector<int> owner;
  std::vector<int> pred;
};

GeodesicResult dijkstra(const AdjacencyGraph& graph,
                        const std::vector<int>& sources);

DistanceField geodesic_distances(const AdjacencyGraph& graph,
                                 const std::vector<int>& sources);

// Distance to the tagged inlet loop; ConfigError when the mesh has none.
DistanceField inlet_distance_feature(const TriangleMesh& mesh,
                                     const AdjacencyGraph& graph);

// Farthest-point sampling over geodesic distance, restricted to `parent`.
// size = ceil(ratio * |parent|). `start` < 0 picks parent[seed % |parent|].
// Returned ascending. ratio in (0, 1]; ratio == 1 returns parent.
std::vector<int> select_subset(const AdjacencyGraph& graph,
                               const std::vector<int>& parent, double ratio,
                               std::uint64_t seed, int start = -1);

// Same, with an explicit subset size.
std::vector<int> select_subset_count(const AdjacencyGraph& graph,
                                     const std::vector<int>& parent,
                                     std::size_t count, std::uint64_t seed,
                                     int start = -1);

// Geodesically nearest center for each parent vertex (ties toward the
// smaller center index); centers map to themselves. Also exposes the
// predecessor tree used to compose transports along shortest paths.
struct ClusterAssignment {
  std::vector<int> center_of;  // per parent entry: assigned center (vertex id)
  std::vector<int> pred;       // per mesh vertex: predecessor toward center
};

ClusterAssignment cluster_assign(const AdjacencyGraph& graph,
                                 const std::vector<int>& parent,
                                 const std::vector<int>& centers);

// Cacheable hierarchy index arrays: little-endian 32-bit ints
// (see README for the layout). Used by the optional dataset cache.
void write_index_cache(const std::string& path,
                       const std::vector<std::vector<int>>& arrays);
std::vector<std::vector<int>> read_index_cache(const std::string& path);

}  // namespace hemomesh
