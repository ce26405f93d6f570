#include "hemomesh/features.hpp"

#include <cmath>

namespace hemomesh {

void local_moments(const TriangleMesh& mesh, const std::vector<Vec3>& normals,
                   const std::vector<int>& ball, int p, double radius,
                   Vec3* dbar, Vec3* nbar) {
  const Vec3& c = mesh.positions[p];
  const double sigma = 0.5 * radius;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double wsum = 0.0;
  Vec3 d = Vec3::Zero(), n = Vec3::Zero();
  for (int q : ball) {
    const Vec3 diff = mesh.positions[q] - c;
    const double w = std::exp(-diff.squaredNorm() * inv2s2);
    wsum += w;
    d += w * diff;
    n += w * normals[q];
  }
  if (wsum <= 0.0)
    throw NumericError("local_moments: empty neighborhood at vertex " +
                       std::to_string(p));
  *dbar = d / wsum;
  *nbar = n / wsum;
}

void outer_features(const Vec3& dbar, const Vec3& nbar, Eigen::Matrix3d* D,
                    Eigen::Matrix3d* N, Eigen::Matrix3d* X) {
  *D = dbar * dbar.transpose();
  *N = nbar * nbar.transpose();
  *X = dbar * nbar.transpose();
}

RepType input_rep_layout(bool include_inlet_distance) {
  RepType r;
  const RepType m = matrix_irrep_layout();
  for (int k = 0; k < 3; ++k)
    r.segments.insert(r.segments.end(), m.segments.begin(), m.segments.end());
  if (include_inlet_distance) r.segments.push_back({0, 1});
  return r;
}

Eigen::MatrixXd build_inputs(const TriangleMesh& mesh,
                             const AdjacencyGraph& graph,
                             const std::vector<Vec3>& normals,
                             const std::vector<TangentFrame>* frames,
                             const DistanceField* inlet_distance,
                             const FeatureRecipe& recipe) {
  if (recipe.form == FeatureForm::irreps && frames == nullptr)
    throw ConfigError("build_inputs: irrep features require tangent frames");
  if (recipe.include_inlet_distance && inlet_distance == nullptr)
    throw ConfigError("build_inputs: inlet distance requested but missing");

  const int nv = mesh.num_vertices();
  const double radius = recipe.resolve_radius(graph);
  const int cols = 27 + (recipe.include_inlet_distance ? 1 : 0);
  Eigen::MatrixXd out(nv, cols);

  const BallIndex index(mesh, radius);
  for (int p = 0; p < nv; ++p) {
    std::vector<int> ball = index.query(mesh, p, radius);
    if (ball.empty()) ball = graph.neighbors[p];  // one-ring fallback
    Vec3 dbar, nbar;
    local_moments(mesh, normals, ball, p, radius, &dbar, &nbar);
    Eigen::Matrix3d D, N, X;
    outer_features(dbar, nbar, &D, &N, &X);
    if (recipe.form == FeatureForm::flattened) {
      int c = 0;
      for (const Eigen::Matrix3d* M : {&D, &N, &X})
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) out(p, c++) = (*M)(i, j);
    } else {
      const TangentFrame& f = (*frames)[p];
      double buf[9];
      int c = 0;
      for (const Eigen::Matrix3d* M : {&D, &N, &X}) {
        matrix_to_irreps(*M, f, buf);
        for (double v : buf) out(p, c++) = v;
      }
    }
    if (recipe.include_inlet_distance) {
      const double dist = inlet_distance->dist[p];
      if (!std::isfinite(dist))
        throw NumericError("build_inputs: vertex " + std::to_string(p) +
                           " unreachable from the inlet");
      out(p, cols - 1) = dist;
    }
  }
  return out;
}

}  // namespace hemomesh
