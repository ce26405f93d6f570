#include "hemomesh/conv.hpp"

#include <cmath>
#include <limits>

namespace hemomesh {

LevelTopo build_level0_topo(const TriangleMesh& mesh,
                            const AdjacencyGraph& graph,
                            const std::vector<TangentFrame>& frames,
                            const std::vector<Vec3>& normals) {
  (void)normals;
  const int nv = graph.num_vertices();
  const NeighborAngles angles = neighbor_angles(mesh, graph, frames);

  LevelTopo topo;
  topo.nv = nv;
  topo.row_begin.resize(nv + 1);
  std::size_t total = 0;
  for (int p = 0; p < nv; ++p) {
    topo.row_begin[p] = static_cast<int>(total);
    total += graph.neighbors[p].size();
  }
  topo.row_begin[nv] = static_cast<int>(total);
  topo.src.resize(total);
  topo.dst.resize(total);
  topo.theta.resize(total);
  topo.gamma.resize(total);
  topo.inv_deg.resize(nv);
  topo.skipped_theta = angles.skipped;

  double degsum = 0.0;
  for (int p = 0; p < nv; ++p) {
    const int deg = graph.degree(p);
    degsum += deg;
    topo.inv_deg[p] = deg > 0 ? 1.0 / deg : 0.0;
    if (deg == 0) ++topo.isolated;
    for (int k = 0; k < deg; ++k) {
      const int e = topo.row_begin[p] + k;
      const int q = graph.neighbors[p][k];
      topo.src[e] = q;
      topo.dst[e] = p;
      topo.theta[e] = angles.theta[p][k];
      topo.gamma[e] = transport_angle(angles, graph, p, q);
    }
  }
  topo.mean_degree = nv > 0 ? degsum / nv : 0.0;
  return topo;
}

GemCoeffLayout gem_coeff_layout(const RepType& in, const RepType& out,
                                const LayerBasis& basis) {
  GemCoeffLayout layout;
  const auto nin = in.segments.size();
  const auto nout = out.segments.size();
  std::int64_t self_off = 0, nbr_off = 0;
  for (std::size_t i = 0; i < nin; ++i)
    for (std::size_t j = 0; j < nout; ++j) {
      const auto& self = basis.self_blocks[i * nout + j];
      const auto& nbr = basis.neighbor_blocks[i * nout + j];
      GemCoeffLayout::PairSlice s;
      s.order_in = in.segments[i].order;
      s.order_out = out.segments[j].order;
      s.mult_in = in.segments[i].mult;
      s.mult_out = out.segments[j].mult;
      s.in_offset = in.offset(static_cast<int>(i));
      s.out_offset = out.offset(static_cast<int>(j));
      if (self.dim() > 0) {
        s.nbasis = self.dim();
        s.coeff_offset = self_off;
        self_off +=
            static_cast<std::int64_t>(self.dim()) * s.mult_in * s.mult_out;
        layout.self_blocks.push_back(s);
      }
      if (nbr.dim() > 0) {
        s.nbasis = nbr.dim();
        s.coeff_offset = nbr_off;
        nbr_off +=
            static_cast<std::int64_t>(nbr.dim()) * s.mult_in * s.mult_out;
        layout.neighbor_blocks.push_back(s);
      }
    }
  layout.self_count = self_off;
  layout.neighbor_count = nbr_off;
  return layout;
}

}  // namespace hemomesh
