#include "hemomesh/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace hemomesh {

namespace {

// Transport angle accumulated along the predecessor path from `v` to its
// cluster center (pred[center] == -1).
double path_transport(const NeighborAngles& angles, const AdjacencyGraph& graph,
                      const std::vector<int>& pred, int v) {
  double gamma = 0.0;
  int cur = v;
  int guard = 0;
  while (pred[cur] >= 0) {
    gamma += transport_angle(angles, graph, pred[cur], cur);
    cur = pred[cur];
    if (++guard > static_cast<int>(pred.size()))
      throw NumericError("path_transport: predecessor cycle");
  }
  return gamma;
}

int nearest_in_set(const std::vector<std::int64_t>& qdist,
                   const std::vector<int>& set) {
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  int pick = -1;
  for (int v : set)
    if (qdist[v] < best) {
      best = qdist[v];
      pick = v;
    }
  return pick;
}

}  // namespace

PoolingHierarchy build_hierarchy(const TriangleMesh& mesh,
                                 const AdjacencyGraph& graph,
                                 const std::vector<TangentFrame>& frames,
                                 const std::vector<Vec3>& normals,
                                 const std::vector<double>& ratios,
                                 std::uint64_t seed, int min_level_size) {
  const int nv = graph.num_vertices();
  PoolingHierarchy h;
  h.level_vertices.emplace_back(nv);
  for (int v = 0; v < nv; ++v) h.level_vertices[0][v] = v;
  h.topo.push_back(build_level0_topo(mesh, graph, frames, normals));
  const NeighborAngles angles = neighbor_angles(mesh, graph, frames);

  // Seeded-but-geometry-anchored FPS start: nearest vertex to the inlet.
  std::vector<std::int64_t> inlet_qdist;
  if (const BoundaryLoop* inlet = mesh.inlet_loop()) {
    inlet_qdist = dijkstra(graph, inlet->vertices).qdist;
  }

  std::size_t prev_size = static_cast<std::size_t>(nv);
  for (double ratio : ratios) {
    if (!(ratio > 0.0) || ratio > 1.0)
      throw ConfigError("build_hierarchy: ratios must lie in (0, 1]");
    const auto target = static_cast<std::size_t>(
        std::ceil(ratio * static_cast<double>(nv)));
    if (target > prev_size)
      throw ConfigError("build_hierarchy: level sizes must be non-increasing");
    if (target < static_cast<std::size_t>(min_level_size))
      throw ConfigError("build_hierarchy: level would collapse to " +
                        std::to_string(target) + " vertices (min " +
                        std::to_string(min_level_size) + ")");
    const auto& parent = h.level_vertices.back();
    int start = -1;
    if (!inlet_qdist.empty()) start = nearest_in_set(inlet_qdist, parent);
    const auto centers =
        select_subset_count(graph, parent, target, seed, start);
    const auto assignment = cluster_assign(graph, parent, centers);

    // Local index of each center.
    std::vector<int> coarse_local(nv, -1);
    for (std::size_t i = 0; i < centers.size(); ++i)
      coarse_local[centers[i]] = static_cast<int>(i);

    PoolLevel lvl;
    lvl.n_fine = static_cast<int>(parent.size());
    lvl.n_coarse = static_cast<int>(centers.size());
    lvl.assign.resize(parent.size());
    lvl.gamma.resize(parent.size());
    for (std::size_t i = 0; i < parent.size(); ++i) {
      lvl.assign[i] = coarse_local[assignment.center_of[i]];
      lvl.gamma[i] = wrap_angle(
          path_transport(angles, graph, assignment.pred, parent[i]));
    }
    // Members CSR, ordered by (coarse, fine) index.
    lvl.member_begin.assign(lvl.n_coarse + 1, 0);
    for (int a : lvl.assign) ++lvl.member_begin[a + 1];
    for (int c = 0; c < lvl.n_coarse; ++c)
      lvl.member_begin[c + 1] += lvl.member_begin[c];
    lvl.member.resize(parent.size());
    {
      std::vector<int> cursor(lvl.member_begin.begin(),
                              lvl.member_begin.end() - 1);
      for (std::size_t i = 0; i < parent.size(); ++i)
        lvl.member[cursor[lvl.assign[i]]++] = static_cast<int>(i);
    }

    // Restricted adjacency between centers via shared clusters, with
    // transports composed through a deterministic witness edge.
    const LevelTopo& fine = h.topo.back();
    struct CoarseEdge {
      double gamma = 0.0;     // transport hi-side cluster -> lo-side cluster
      double theta_lo = 0.0;  // direction lo -> hi in lo-center's gauge
      double theta_hi = 0.0;  // direction hi -> lo in hi-center's gauge
      int wa = -1, wb = -1;
    };
    std::map<std::pair<int, int>, CoarseEdge> coarse_edges;
    for (int e = 0; e < fine.num_edges(); ++e) {
      const int a = fine.dst[e];  // message destination
      const int b = fine.src[e];
      const int ca = lvl.assign[a], cb = lvl.assign[b];
      if (ca == cb) continue;
      const int lo = std::min(ca, cb), hi = std::max(ca, cb);
      // Keep only the direction whose destination lies in the low cluster;
      // the reverse direction is reconstructed by antisymmetry.
      if (ca != lo) continue;
      auto& ce = coarse_edges[{lo, hi}];
      const int ga = parent[a], gb = parent[b];
      if (ce.wa < 0 || std::make_pair(ga, gb) < std::make_pair(ce.wa, ce.wb)) {
        ce.wa = ga;
        ce.wb = gb;
        // gamma(lo <- hi) composed along hi-center -> b -> a -> lo-center.
        ce.gamma = wrap_angle(lvl.gamma[a] + fine.gamma[e] - lvl.gamma[b]);
        // Witness edge direction (a -> b points toward the hi cluster),
        // parallel-transported into each center's gauge.
        ce.theta_lo = wrap_angle(fine.theta[e] + lvl.gamma[a]);
        ce.theta_hi =
            wrap_angle(fine.theta[e] + kPi - fine.gamma[e] + lvl.gamma[b]);
      }
    }

    // Coarse topo (CSR by destination, neighbors ascending).
    LevelTopo ct;
    ct.nv = lvl.n_coarse;
    std::vector<std::vector<std::pair<int, std::pair<double, double>>>> nbr(
        ct.nv);
    for (const auto& [key, ce] : coarse_edges) {
      nbr[key.first].push_back({key.second, {ce.gamma, ce.theta_lo}});
      nbr[key.second].push_back(
          {key.first, {wrap_angle(-ce.gamma), ce.theta_hi}});
    }
    ct.row_begin.resize(ct.nv + 1);
    double degsum = 0.0;
    int total = 0;
    for (int p = 0; p < ct.nv; ++p) {
      std::sort(nbr[p].begin(), nbr[p].end());
      ct.row_begin[p] = total;
      total += static_cast<int>(nbr[p].size());
      degsum += static_cast<double>(nbr[p].size());
    }
    ct.row_begin[ct.nv] = total;
    ct.src.resize(total);
    ct.dst.resize(total);
    ct.theta.resize(total);
    ct.gamma.resize(total);
    ct.inv_deg.resize(ct.nv);
    for (int p = 0; p < ct.nv; ++p) {
      ct.inv_deg[p] = nbr[p].empty() ? 0.0 : 1.0 / nbr[p].size();
      if (nbr[p].empty()) ++ct.isolated;
      for (std::size_t k = 0; k < nbr[p].size(); ++k) {
        const int e = ct.row_begin[p] + static_cast<int>(k);
        const int q = nbr[p][k].first;
        ct.src[e] = q;
        ct.dst[e] = p;
        ct.gamma[e] = nbr[p][k].second.first;
        ct.theta[e] = nbr[p][k].second.second;
      }
    }
    ct.mean_degree = ct.nv > 0 ? degsum / ct.nv : 0.0;

    h.pools.push_back(std::move(lvl));
    h.topo.push_back(std::move(ct));
    h.level_vertices.push_back(centers);
    prev_size = target;
  }
  return h;
}

}  // namespace hemomesh
