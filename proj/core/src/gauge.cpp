#include "hemomesh/gauge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace hemomesh {

Eigen::MatrixXd irrep_matrix(int order, double angle) {
  if (order < 0) throw ConfigError("irrep order must be >= 0");
  if (order == 0) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = 1.0;
    return m;
  }
  const double c = std::cos(order * angle);
  const double s = std::sin(order * angle);
  Eigen::MatrixXd m(2, 2);
  m << c, -s, s, c;
  return m;
}

std::vector<TangentFrame> build_frames(const TriangleMesh& mesh,
                                       const AdjacencyGraph& graph,
                                       const std::vector<Vec3>& normals) {
  const int nv = mesh.num_vertices();
  std::vector<TangentFrame> frames(nv);
  for (int p = 0; p < nv; ++p) {
    const Vec3& n = normals[p];
    TangentFrame f;
    f.n = n;
    f.reference_neighbor = -1;
    for (std::size_t k = 0; k < graph.neighbors[p].size(); ++k) {
      const int q = graph.neighbors[p][k];
      const Vec3 d = mesh.positions[q] - mesh.positions[p];
      const Vec3 proj = d - d.dot(n) * n;
      if (proj.norm() > 1e-9 * graph.lengths[p][k]) {
        f.e1 = proj.normalized();
        f.e2 = n.cross(f.e1);
        f.reference_neighbor = q;
        break;
      }
    }
    if (f.reference_neighbor < 0)
      throw MeshError("no valid reference neighbor at vertex " +
                      std::to_string(p));
    frames[p] = f;
  }
  return frames;
}

NeighborAngles neighbor_angles(const TriangleMesh& mesh,
                               const AdjacencyGraph& graph,
                               const std::vector<TangentFrame>& frames) {
  NeighborAngles out;
  const int nv = mesh.num_vertices();
  out.theta.resize(nv);

  // Fan successor map around each vertex: triangle (p, a, b), counter-
  // clockwise as seen from outside, contributes a -> b around p.
  std::vector<std::map<int, int>> succ(nv);
  for (const auto& tri : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      const int p = tri[k];
      const int a = tri[(k + 1) % 3];
      const int b = tri[(k + 2) % 3];
      succ[p][a] = b;
    }

  for (int p = 0; p < nv; ++p) {
    const auto& nbr = graph.neighbors[p];
    const int deg = static_cast<int>(nbr.size());
    out.theta[p].assign(deg, 0.0);
    if (deg == 0) continue;
    if (deg == 1) {
      ++out.skipped;
      continue;
    }
    // Chain start: boundary fans start at the neighbor with no predecessor.
    std::map<int, int> pred;
    for (const auto& [a, b] : succ[p]) pred[b] = a;
    int start = -1;
    for (const auto& [a, b] : succ[p])
      if (!pred.count(a)) start = a;
    const bool closed = start < 0;
    if (closed) start = succ[p].begin()->first;

    // Accumulate corner angles along the fan.
    std::map<int, double> cum;
    double total = 0.0;
    int cur = start;
    cum[cur] = 0.0;
    for (int step = 0; step < deg; ++step) {
      auto it = succ[p].find(cur);
      if (it == succ[p].end()) break;
      const int nxt = it->second;
      const Vec3 u = (mesh.positions[cur] - mesh.positions[p]).normalized();
      const Vec3 v = (mesh.positions[nxt] - mesh.positions[p]).normalized();
      total += std::acos(std::clamp(u.dot(v), -1.0, 1.0));
      if (nxt == start) break;
      cum[nxt] = total;
      cur = nxt;
    }
    if (static_cast<int>(cum.size()) != deg) {
      ++out.skipped;  // fan does not cover the one-ring; leave zeros
      continue;
    }
    // Interior fans are rescaled to a full turn; boundary fans keep their
    // measured angles.
    const double factor = closed ? kTwoPi / total : 1.0;
    const double ref =
        cum.count(frames[p].reference_neighbor)
            ? cum[frames[p].reference_neighbor]
            : 0.0;
    for (int k = 0; k < deg; ++k) {
      auto it = cum.find(nbr[k]);
      out.theta[p][k] = wrap_angle((it->second - ref) * factor);
    }
  }
  return out;
}

namespace {

double angle_of_neighbor(const NeighborAngles& angles,
                         const AdjacencyGraph& graph, int p, int q) {
  const auto& nbr = graph.neighbors[p];
  const auto it = std::lower_bound(nbr.begin(), nbr.end(), q);
  if (it == nbr.end() || *it != q)
    throw ConfigError("transport_angle: (" + std::to_string(p) + "," +
                      std::to_string(q) + ") is not an edge");
  return angles.theta[p][it - nbr.begin()];
}

}  // namespace

double transport_angle(const NeighborAngles& angles,
                       const AdjacencyGraph& graph, int p, int q) {
  const double at_p = angle_of_neighbor(angles, graph, p, q);
  const double at_q = angle_of_neighbor(angles, graph, q, p);
  return wrap_angle(at_p + kPi - at_q);
}

void vector_to_irreps(const Vec3& v, const TangentFrame& f, double out[3]) {
  out[0] = f.n.dot(v);
  out[1] = f.e1.dot(v);
  out[2] = f.e2.dot(v);
}

void matrix_to_irreps(const Eigen::Matrix3d& M, const TangentFrame& f,
                      double out[9]) {
  const Vec3 Me1 = M * f.e1, Me2 = M * f.e2, Mn = M * f.n;
  const double m11 = f.e1.dot(Me1);
  const double m12 = f.e1.dot(Me2);
  const double m21 = f.e2.dot(Me1);
  const double m22 = f.e2.dot(Me2);
  const double m13 = f.e1.dot(Mn);
  const double m23 = f.e2.dot(Mn);
  const double m31 = f.n.dot(Me1);
  const double m32 = f.n.dot(Me2);
  const double m33 = f.n.dot(Mn);
  // rho_0 x 3
  out[0] = m33;
  out[1] = m11 + m22;
  out[2] = 0.5 * (m12 - m21);
  // rho_1 x 2: tangential parts of M n and M^T n
  out[3] = m13;
  out[4] = m23;
  out[5] = m31;
  out[6] = m32;
  // rho_2: symmetric-traceless tangential block [[a, b], [b, -a]]
  out[7] = 0.5 * (m11 - m22);
  out[8] = 0.5 * (m12 + m21);
}

RepType matrix_irrep_layout() { return RepType{{{0, 3}, {1, 2}, {2, 1}}}; }

}  // namespace hemomesh
