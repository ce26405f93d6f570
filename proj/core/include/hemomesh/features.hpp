#pragma once

#include <Eigen/Core>
#include <optional>

#include "hemomesh/gauge.hpp"
#include "hemomesh/geodesy.hpp"

namespace hemomesh {

enum class FeatureForm { flattened, irreps };

// Recipe for the translation-invariant, rotation-equivariant input features:
// Gaussian-weighted local position differences and normals inside a ball,
// their outer products, and the geodesic inlet distance.
struct FeatureRecipe {
  double ball_radius = 0.0;  // mm; <= 0 resolves to 2x mean edge length
  bool include_inlet_distance = true;
  FeatureForm form = FeatureForm::flattened;

  double resolve_radius(const AdjacencyGraph& graph) const {
    return ball_radius > 0.0 ? ball_radius : 2.0 * mean_edge_length(graph);
  }
};

// Weighted local moments at p: dbar = sum w_q (pos q - pos p),
// nbar = sum w_q normal_q, with normalized Gaussian weights
// w_q ~ exp(-|pos q - pos p|^2 / (2 sigma^2)), sigma = radius / 2.
void local_moments(const TriangleMesh& mesh, const std::vector<Vec3>& normals,
                   const std::vector<int>& ball, int p, double radius,
                   Vec3* dbar, Vec3* nbar);

// The three outer products D = d d^T, N = n n^T, X = d n^T.
void outer_features(const Vec3& dbar, const Vec3& nbar, Eigen::Matrix3d* D,
                    Eigen::Matrix3d* N, Eigen::Matrix3d* X);

// Rep layout of the irrep-form features:
// [D | N | X] each as (3 x rho_0, 2 x rho_1, 1 x rho_2), then the inlet
// distance as one extra rho_0. 28 channels in either form.
RepType input_rep_layout(bool include_inlet_distance);

// Per-vertex input features, rows in vertex order.
// flattened: 27 row-major matrix entries [D, N, X] + inlet distance.
// irreps:    decompositions relative to `frames` (required), same order.
Eigen::MatrixXd build_inputs(const TriangleMesh& mesh,
                             const AdjacencyGraph& graph,
                             const std::vector<Vec3>& normals,
                             const std::vector<TangentFrame>* frames,
                             const DistanceField* inlet_distance,
                             const FeatureRecipe& recipe);

}  // namespace hemomesh
