#include "hemomesh/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

namespace hemomesh {

namespace {

using HeapItem = std::pair<std::int64_t, int>;  // (distance, vertex)

}  // namespace

GeodesicResult dijkstra(const AdjacencyGraph& graph,
                        const std::vector<int>& sources) {
  if (sources.empty()) throw ConfigError("dijkstra: empty source set");
  const int nv = graph.num_vertices();
  GeodesicResult r;
  r.qdist.assign(nv, kGeoInf);
  r.owner.assign(nv, -1);
  r.pred.assign(nv, -1);

  std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>>
      heap;
  for (int s : sources) {
    if (s < 0 || s >= nv) throw ConfigError("dijkstra: source out of range");
    if (r.qdist[s] == 0 && r.owner[s] <= s && r.owner[s] >= 0) continue;
    r.qdist[s] = 0;
    if (r.owner[s] < 0 || s < r.owner[s]) r.owner[s] = s;
  }
  for (int v = 0; v < nv; ++v)
    if (r.qdist[v] == 0) heap.emplace(0, v);

  std::vector<char> done(nv, 0);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[u] || d != r.qdist[u]) continue;
    done[u] = 1;
    const auto& nbr = graph.neighbors[u];
    const auto& len = graph.qlengths[u];
    for (std::size_t k = 0; k < nbr.size(); ++k) {
      const int v = nbr[k];
      const std::int64_t nd = d + len[k];
      if (nd < r.qdist[v]) {
        r.qdist[v] = nd;
        r.owner[v] = r.owner[u];
        r.pred[v] = u;
        heap.emplace(nd, v);
      } else if (nd == r.qdist[v] && !done[v]) {
        // Equal-length path: prefer the smaller owner, then smaller pred.
        if (r.owner[u] < r.owner[v] ||
            (r.owner[u] == r.owner[v] && u < r.pred[v])) {
          r.owner[v] = r.owner[u];
          r.pred[v] = u;
        }
      }
    }
  }
  return r;
}

DistanceField geodesic_distances(const AdjacencyGraph& graph,
                                 const std::vector<int>& sources) {
  const auto res = dijkstra(graph, sources);
  DistanceField f;
  f.sources = sources;
  const int nv = graph.num_vertices();
  f.dist.resize(nv);
  f.reachable.resize(nv);
  for (int v = 0; v < nv; ++v) {
    const bool ok = res.qdist[v] < kGeoInf;
    f.reachable[v] = ok ? 1 : 0;
    f.dist[v] = ok ? static_cast<double>(res.qdist[v]) * kGeoQuantum
                   : std::numeric_limits<double>::infinity();
    if (!ok) ++f.unreachable_count;
  }
  return f;
}

DistanceField inlet_distance_feature(const TriangleMesh& mesh,
                                     const AdjacencyGraph& graph) {
  const BoundaryLoop* inlet = mesh.inlet_loop();
  if (inlet == nullptr)
    throw ConfigError("inlet_distance_feature: mesh has no tagged inlet loop");
  return geodesic_distances(graph, inlet->vertices);
}

std::vector<int> select_subset(const AdjacencyGraph& graph,
                               const std::vector<int>& parent, double ratio,
                               std::uint64_t seed, int start) {
  if (parent.empty()) throw ConfigError("select_subset: empty parent set");
  if (!(ratio > 0.0) || ratio > 1.0)
    throw ConfigError("select_subset: ratio must be in (0, 1]");
  const auto want = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(parent.size())));
  return select_subset_count(graph, parent, want, seed, start);
}

std::vector<int> select_subset_count(const AdjacencyGraph& graph,
                                     const std::vector<int>& parent,
                                     std::size_t count, std::uint64_t seed,
                                     int start) {
  if (parent.empty()) throw ConfigError("select_subset: empty parent set");
  const std::size_t want = count;
  if (want == 0) throw ConfigError("select_subset: subset size must be > 0");
  if (want >= parent.size()) {
    auto out = parent;
    std::sort(out.begin(), out.end());
    return out;
  }

  const int nv = graph.num_vertices();
  std::vector<char> in_parent(nv, 0);
  for (int v : parent) in_parent[v] = 1;

  int first = start;
  if (first < 0) first = parent[seed % parent.size()];
  if (first < 0 || first >= nv || !in_parent[first])
    throw ConfigError("select_subset: start vertex not in parent set");

  std::vector<std::int64_t> mind(nv, kGeoInf);
  std::vector<char> chosen(nv, 0);
  std::vector<int> out;
  out.reserve(want);

  auto relax_from = [&](int c) {
    std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>>
        heap;
    mind[c] = 0;
    heap.emplace(0, c);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d != mind[u]) continue;
      const auto& nbr = graph.neighbors[u];
      const auto& len = graph.qlengths[u];
      for (std::size_t k = 0; k < nbr.size(); ++k) {
        const std::int64_t nd = d + len[k];
        if (nd < mind[nbr[k]]) {
          mind[nbr[k]] = nd;
          heap.emplace(nd, nbr[k]);
        }
      }
    }
  };

  chosen[first] = 1;
  out.push_back(first);
  relax_from(first);
  while (out.size() < want) {
    // Farthest remaining parent vertex; ties toward the smaller index.
    std::int64_t best = -1;
    int pick = -1;
    for (int v : parent) {
      if (chosen[v]) continue;
      if (mind[v] > best) {
        best = mind[v];
        pick = v;
      }
    }
    if (pick < 0) break;
    chosen[pick] = 1;
    out.push_back(pick);
    relax_from(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ClusterAssignment cluster_assign(const AdjacencyGraph& graph,
                                 const std::vector<int>& parent,
                                 const std::vector<int>& centers) {
  if (centers.empty()) throw ConfigError("cluster_assign: empty center set");
  std::vector<char> in_parent(graph.num_vertices(), 0);
  for (int v : parent) in_parent[v] = 1;
  for (int c : centers)
    if (c < 0 || c >= graph.num_vertices() || !in_parent[c])
      throw ConfigError("cluster_assign: center " + std::to_string(c) +
                        " not contained in parent set");

  const auto res = dijkstra(graph, centers);
  ClusterAssignment a;
  a.pred = res.pred;
  a.center_of.reserve(parent.size());
  for (int v : parent) {
    if (res.qdist[v] >= kGeoInf)
      throw MeshError("cluster_assign: vertex " + std::to_string(v) +
                      " cannot reach any center (disconnected mesh)");
    a.center_of.push_back(res.owner[v]);
  }
  return a;
}

void write_index_cache(const std::string& path,
                       const std::vector<std::vector<int>>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write index cache: " + path);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(0x48494458u);  // "HIDX"
  put_u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(static_cast<std::uint32_t>(a.size()));
    for (int v : a) put_u32(static_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("failed writing index cache: " + path);
}

std::vector<std::vector<int>> read_index_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read index cache: " + path);
  auto get_u32 = [&]() -> std::uint32_t {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated index cache: " + path);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  if (get_u32() != 0x48494458u) throw IoError("bad index cache magic: " + path);
  const std::uint32_t count = get_u32();
  std::vector<std::vector<int>> arrays(count);
  for (auto& a : arrays) {
    a.resize(get_u32());
    for (auto& v : a) v = static_cast<int>(get_u32());
  }
  return arrays;
}

}  // namespace hemomesh
