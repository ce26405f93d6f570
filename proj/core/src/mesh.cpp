#include "hemomesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace hemomesh {

namespace {

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

struct EdgeUse {
  int count = 0;
  int forward = 0;  // times traversed as (min,max)
  int tri[2] = {-1, -1};
};

std::unordered_map<std::uint64_t, EdgeUse> collect_edges(
    const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, EdgeUse> edges;
  edges.reserve(mesh.triangles.size() * 3);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k];
      const int b = tri[(k + 1) % 3];
      auto& e = edges[edge_key(a, b)];
      if (e.count < 2) e.tri[e.count] = t;
      ++e.count;
      if (a < b) ++e.forward;
    }
  }
  return edges;
}

}  // namespace

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << (ok ? "ok" : "invalid");
  for (const auto& s : issues) os << "\n  - " << s;
  return os.str();
}

ValidationReport validate(const TriangleMesh& mesh) {
  ValidationReport r;
  const int nv = mesh.num_vertices();

  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= nv) {
        r.valid_indices = false;
        r.issues.push_back("triangle " + std::to_string(t) +
                           " references vertex " + std::to_string(tri[k]));
      }
    }
    if (!r.valid_indices) continue;
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      r.no_degenerate_triangles = false;
      r.issues.push_back("triangle " + std::to_string(t) +
                         " repeats a vertex");
      continue;
    }
    const Vec3 c = (mesh.positions[tri[1]] - mesh.positions[tri[0]])
                       .cross(mesh.positions[tri[2]] - mesh.positions[tri[0]]);
    if (0.5 * c.norm() <= 1e-12) {
      r.no_degenerate_triangles = false;
      r.issues.push_back("triangle " + std::to_string(t) + " has zero area");
    }
  }

  if (r.valid_indices) {
    const auto edges = collect_edges(mesh);
    for (const auto& [key, use] : edges) {
      const int a = static_cast<int>(key >> 32);
      const int b = static_cast<int>(key & 0xffffffffu);
      if (use.count > 2) {
        r.manifold = false;
        r.issues.push_back("edge (" + std::to_string(a) + "," +
                           std::to_string(b) + ") shared by " +
                           std::to_string(use.count) + " triangles");
      } else if (use.count == 2 && use.forward != 1) {
        r.consistent_winding = false;
        r.issues.push_back("edge (" + std::to_string(a) + "," +
                           std::to_string(b) + ") wound inconsistently");
      }
    }

    // Boundary loops in the mesh must match the traced ones and be tagged.
    try {
      auto traced = trace_boundary_loops(mesh);
      auto sorted_set = [](std::vector<int> v) {
        std::sort(v.begin(), v.end());
        return v;
      };
      std::vector<std::vector<int>> traced_sets;
      traced_sets.reserve(traced.size());
      for (auto& l : traced) traced_sets.push_back(sorted_set(l));

      int inlets = 0, outlets = 0;
      if (mesh.boundary_loops.size() != traced.size()) {
        r.loops_tagged = false;
        r.issues.push_back("mesh lists " +
                           std::to_string(mesh.boundary_loops.size()) +
                           " boundary loops, connectivity has " +
                           std::to_string(traced.size()));
      }
      for (const auto& loop : mesh.boundary_loops) {
        if (loop.tag == LoopTag::inlet) ++inlets;
        if (loop.tag == LoopTag::outlet) ++outlets;
        auto s = sorted_set(loop.vertices);
        bool found = false;
        for (const auto& ts : traced_sets)
          if (ts == s) {
            found = true;
            break;
          }
        if (!found) {
          r.loops_tagged = false;
          r.issues.push_back("tagged loop does not match any boundary loop");
        }
      }
      if (inlets != 1) {
        r.loops_tagged = false;
        r.issues.push_back("expected exactly one inlet loop, found " +
                           std::to_string(inlets));
      }
      if (outlets < 1) {
        r.loops_tagged = false;
        r.issues.push_back("expected at least one outlet loop");
      }
    } catch (const MeshError& e) {
      r.manifold = false;
      r.issues.push_back(std::string("boundary tracing failed: ") + e.what());
    }
  }

  r.ok = r.valid_indices && r.manifold && r.consistent_winding &&
         r.no_degenerate_triangles && r.loops_tagged;
  return r;
}

AdjacencyGraph build_adjacency(const TriangleMesh& mesh) {
  const int nv = mesh.num_vertices();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k)
      if (tri[k] < 0 || tri[k] >= nv)
        throw MeshError("triangle " + std::to_string(t) +
                        " references invalid vertex");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw MeshError("triangle " + std::to_string(t) +
                      " is degenerate (repeated vertex)");
  }

  const auto edges = collect_edges(mesh);
  AdjacencyGraph g;
  g.neighbors.assign(nv, {});
  for (const auto& [key, use] : edges) {
    if (use.count > 2) {
      const int a = static_cast<int>(key >> 32);
      const int b = static_cast<int>(key & 0xffffffffu);
      throw MeshError("non-manifold edge (" + std::to_string(a) + "," +
                      std::to_string(b) + ") shared by " +
                      std::to_string(use.count) + " triangles");
    }
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  g.lengths.resize(nv);
  g.qlengths.resize(nv);
  for (int v = 0; v < nv; ++v) {
    std::sort(g.neighbors[v].begin(), g.neighbors[v].end());
    g.lengths[v].reserve(g.neighbors[v].size());
    g.qlengths[v].reserve(g.neighbors[v].size());
    for (int q : g.neighbors[v]) {
      const double len = (mesh.positions[q] - mesh.positions[v]).norm();
      if (!(len > 0.0))
        throw MeshError("zero-length edge (" + std::to_string(v) + "," +
                        std::to_string(q) + ")");
      g.lengths[v].push_back(len);
      // Clamp to one quantum so shortest-path weights stay positive.
      g.qlengths[v].push_back(
          std::max<std::int64_t>(1, llround(len / kGeoQuantum)));
    }
  }
  return g;
}

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  const int nv = mesh.num_vertices();
  std::vector<Vec3> acc(nv, Vec3::Zero());
  double mean_cross = 0.0;
  for (const auto& tri : mesh.triangles) {
    const Vec3 c = (mesh.positions[tri[1]] - mesh.positions[tri[0]])
                       .cross(mesh.positions[tri[2]] - mesh.positions[tri[0]]);
    mean_cross += c.norm();
    for (int k = 0; k < 3; ++k) acc[tri[k]] += c;  // area weighting (2A * n)
  }
  mean_cross /= std::max<std::size_t>(1, mesh.triangles.size());
  std::vector<Vec3> normals(nv);
  for (int v = 0; v < nv; ++v) {
    const double n = acc[v].norm();
    if (n <= 1e-12 * mean_cross)
      throw MeshError("degenerate normal at vertex " + std::to_string(v));
    normals[v] = acc[v] / n;
  }
  return normals;
}

std::vector<int> ball_neighbors(const TriangleMesh& mesh,
                                const AdjacencyGraph& graph, int p,
                                double radius) {
  if (!(radius > 0.0)) throw ConfigError("ball radius must be positive");
  std::vector<int> out;
  const Vec3& c = mesh.positions[p];
  for (int q = 0; q < mesh.num_vertices(); ++q) {
    if (q == p) continue;
    if ((mesh.positions[q] - c).norm() <= radius) out.push_back(q);
  }
  if (out.empty()) out = graph.neighbors[p];  // one-ring fallback
  return out;
}

BallIndex::BallIndex(const TriangleMesh& mesh, double cell_size)
    : cell_(cell_size) {
  if (!(cell_ > 0.0)) throw ConfigError("BallIndex cell size must be > 0");
  origin_ = Vec3::Constant(std::numeric_limits<double>::max());
  for (const auto& p : mesh.positions) origin_ = origin_.cwiseMin(p);
  cells_.reserve(mesh.positions.size());
  for (int v = 0; v < mesh.num_vertices(); ++v)
    cells_.emplace_back(cell_key(mesh.positions[v]), v);
  std::sort(cells_.begin(), cells_.end());
}

std::int64_t BallIndex::cell_key(const Vec3& p) const {
  const auto ix = static_cast<std::int64_t>(std::floor((p.x() - origin_.x()) / cell_));
  const auto iy = static_cast<std::int64_t>(std::floor((p.y() - origin_.y()) / cell_));
  const auto iz = static_cast<std::int64_t>(std::floor((p.z() - origin_.z()) / cell_));
  return ((ix & 0x1fffff) << 42) | ((iy & 0x1fffff) << 21) | (iz & 0x1fffff);
}

std::vector<int> BallIndex::query(const TriangleMesh& mesh, int p,
                                  double radius) const {
  std::vector<int> out;
  const Vec3& c = mesh.positions[p];
  const int reach = static_cast<int>(std::ceil(radius / cell_));
  for (int dx = -reach; dx <= reach; ++dx)
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dz = -reach; dz <= reach; ++dz) {
        const Vec3 probe = c + cell_ * Vec3(dx, dy, dz);
        const std::int64_t key = cell_key(probe);
        auto it = std::lower_bound(cells_.begin(), cells_.end(),
                                   std::make_pair(key, -1));
        for (; it != cells_.end() && it->first == key; ++it) {
          const int q = it->second;
          if (q == p) continue;
          if ((mesh.positions[q] - c).norm() <= radius) out.push_back(q);
        }
      }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double mean_edge_length(const AdjacencyGraph& graph) {
  double total = 0.0;
  std::size_t n = 0;
  for (int v = 0; v < graph.num_vertices(); ++v)
    for (std::size_t k = 0; k < graph.neighbors[v].size(); ++k)
      if (graph.neighbors[v][k] > v) {
        total += graph.lengths[v][k];
        ++n;
      }
  if (n == 0) throw MeshError("mesh has no edges");
  return total / static_cast<double>(n);
}

std::vector<std::vector<int>> trace_boundary_loops(const TriangleMesh& mesh) {
  const auto edges = collect_edges(mesh);
  // Directed boundary edges, oriented as they appear in their one triangle.
  std::map<int, int> next;  // ordered map keeps everything deterministic
  for (const auto& [key, use] : edges) {
    if (use.count != 1) continue;
    const auto& tri = mesh.triangles[use.tri[0]];
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    int u = -1, v = -1;
    for (int k = 0; k < 3; ++k) {
      const int s = tri[k];
      const int t = tri[(k + 1) % 3];
      if ((s == a && t == b) || (s == b && t == a)) {
        u = s;
        v = t;
        break;
      }
    }
    if (next.count(u))
      throw MeshError("boundary is not a disjoint union of simple loops at vertex " +
                      std::to_string(u));
    next[u] = v;
  }

  std::vector<std::vector<int>> loops;
  std::map<int, int> pending = next;
  while (!pending.empty()) {
    const int start = pending.begin()->first;
    std::vector<int> loop;
    int cur = start;
    do {
      auto it = pending.find(cur);
      if (it == pending.end())
        throw MeshError("open boundary chain at vertex " + std::to_string(cur));
      loop.push_back(cur);
      const int nxt = it->second;
      pending.erase(it);
      cur = nxt;
    } while (cur != start);
    // Canonical start: smallest vertex.
    const auto mn = std::min_element(loop.begin(), loop.end());
    std::rotate(loop.begin(), mn, loop.end());
    loops.push_back(std::move(loop));
  }
  std::sort(loops.begin(), loops.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  return loops;
}

void orient_consistently(TriangleMesh& mesh, const Vec3& interior_hint) {
  const int nt = mesh.num_triangles();
  if (nt == 0) return;
  // Adjacency between triangles over shared undirected edges.
  std::unordered_map<std::uint64_t, std::vector<int>> edge_tris;
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k)
      edge_tris[edge_key(tri[k], tri[(k + 1) % 3])].push_back(t);
  }
  std::vector<char> visited(nt, 0), flipped(nt, 0);
  std::vector<int> stack;
  for (int seed = 0; seed < nt; ++seed) {
    if (visited[seed]) continue;
    visited[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      auto tri = mesh.triangles[t];
      if (flipped[t]) std::swap(tri[1], tri[2]);
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k];
        const int b = tri[(k + 1) % 3];
        for (int s : edge_tris[edge_key(a, b)]) {
          if (s == t) continue;
          // Neighbor must traverse (b, a); if it traverses (a, b) it needs a flip.
          auto st = mesh.triangles[s];
          if (flipped[s]) std::swap(st[1], st[2]);
          bool same_dir = false;
          for (int m = 0; m < 3; ++m)
            if (st[m] == a && st[(m + 1) % 3] == b) same_dir = true;
          if (!visited[s]) {
            visited[s] = 1;
            flipped[s] = flipped[t] ^ (same_dir ? 1 : 0);
            stack.push_back(s);
          } else if ((flipped[s] ^ (same_dir ? 1 : 0)) != flipped[t]) {
            throw MeshError("mesh is not orientable");
          }
        }
      }
    }
  }
  for (int t = 0; t < nt; ++t)
    if (flipped[t]) std::swap(mesh.triangles[t][1], mesh.triangles[t][2]);

  // Point normals away from the interior hint on average.
  double agree = 0.0;
  for (const auto& tri : mesh.triangles) {
    const Vec3 c = (mesh.positions[tri[0]] + mesh.positions[tri[1]] +
                    mesh.positions[tri[2]]) /
                   3.0;
    const Vec3 n = (mesh.positions[tri[1]] - mesh.positions[tri[0]])
                       .cross(mesh.positions[tri[2]] - mesh.positions[tri[0]]);
    agree += n.dot(c - interior_hint);
  }
  if (agree < 0.0)
    for (auto& tri : mesh.triangles) std::swap(tri[1], tri[2]);
}

}  // namespace hemomesh
