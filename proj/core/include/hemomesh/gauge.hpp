#pragma once

#include <Eigen/Core>
#include <vector>

#include "hemomesh/mesh.hpp"

namespace hemomesh {

// Per-vertex orthonormal tangent frame. e1 points toward the projection of
// the reference neighbor, e2 = n x e1, so {e1, e2, n} is right-handed.
struct TangentFrame {
  Vec3 e1, e2, n;
  int reference_neighbor = -1;
};

// Irreducible representation of SO(2): order 0 is the scalar type (dim 1),
// order n >= 1 a 2D rotation type spinning n times per turn.
struct IrrepType {
  int order = 0;
  int dim() const { return order == 0 ? 1 : 2; }
  bool operator==(const IrrepType& o) const { return order == o.order; }
};

struct RepSegment {
  int order = 0;
  int mult = 0;
};

// Ordered list of (irrep, multiplicity) segments; the order defines the
// feature memory layout. A segment of order n and multiplicity m occupies
// m * dim(n) consecutive channels.
struct RepType {
  std::vector<RepSegment> segments;

  int dim() const {
    int d = 0;
    for (const auto& s : segments) d += s.mult * IrrepType{s.order}.dim();
    return d;
  }
  int max_order() const {
    int m = 0;
    for (const auto& s : segments) m = std::max(m, s.order);
    return m;
  }
  // Channel offset of segment k.
  int offset(int k) const {
    int d = 0;
    for (int i = 0; i < k; ++i)
      d += segments[i].mult * IrrepType{segments[i].order}.dim();
    return d;
  }
  bool operator==(const RepType& o) const {
    if (segments.size() != o.segments.size()) return false;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (segments[i].order != o.segments[i].order ||
          segments[i].mult != o.segments[i].mult)
        return false;
    return true;
  }

  static RepType scalars(int count) { return RepType{{{0, count}}}; }
  // Equal multiplicity of rho_0, rho_1, ..., rho_maxorder.
  static RepType uniform(int mult, int max_order) {
    RepType r;
    for (int n = 0; n <= max_order; ++n) r.segments.push_back({n, mult});
    return r;
  }
  static RepType concat(const RepType& a, const RepType& b) {
    RepType r = a;
    r.segments.insert(r.segments.end(), b.segments.begin(), b.segments.end());
    return r;
  }
};

// rho_n(angle): [1] for n = 0, planar rotation by n*angle otherwise.
Eigen::MatrixXd irrep_matrix(int order, double angle);

// Gauge construction. The reference neighbor is the first neighbor in
// ascending index whose tangent-plane projection is non-degenerate; this
// makes gauges reproducible and co-rotating under rigid motion.
std::vector<TangentFrame> build_frames(const TriangleMesh& mesh,
                                       const AdjacencyGraph& graph,
                                       const std::vector<Vec3>& normals);

// Per-vertex angular coordinates of the one-ring, intrinsic to the surface
// metric: corner angles of the triangle fan are accumulated around each
// vertex and rescaled so interior vertices span exactly 2*pi, then shifted
// so the reference neighbor sits at angle 0. On flat patches this equals
// the tangent-plane projection angle; on curved meshes it is the discrete
// Levi-Civita chart, which makes transport holonomy around a loop equal
// the enclosed angle defect exactly.
struct NeighborAngles {
  // theta[p][k]: angle of graph.neighbors[p][k] at p, in [0, 2*pi).
  std::vector<std::vector<double>> theta;
  int skipped = 0;  // degenerate-fan warning counter (angles fall back)
};

NeighborAngles neighbor_angles(const TriangleMesh& mesh,
                               const AdjacencyGraph& graph,
                               const std::vector<TangentFrame>& frames);

// Parallel-transport angle gamma(p, q) across edge (p, q): coefficients at
// q map into the gauge at p by rho_n(n * gamma). Defined by edge
// compatibility in the intrinsic charts,
//   gamma(p, q) = theta_p(q) + pi - theta_q(p)   (mod 2*pi),
// hence exactly antisymmetric and with loop holonomy equal to the enclosed
// angle defect.
double transport_angle(const NeighborAngles& angles,
                       const AdjacencyGraph& graph, int p, int q);

// Decomposition of Euclidean quantities into irrep components relative to a
// frame. A 3-vector yields (rho_0: v.n; rho_1: (v.e1, v.e2)). A 3x3 matrix
// yields, in this order:
//   rho_0: n.Mn, trace of the tangential block, antisymmetric part
//   rho_1: tangential part of M n, tangential part of M^T n
//   rho_2: symmetric-traceless tangential block as (a, b)
void vector_to_irreps(const Vec3& v, const TangentFrame& f, double out[3]);
void matrix_to_irreps(const Eigen::Matrix3d& M, const TangentFrame& f,
                      double out[9]);

// Rep layout of one decomposed matrix: 3 x rho_0, 2 x rho_1, 1 x rho_2.
RepType matrix_irrep_layout();

}  // namespace hemomesh
