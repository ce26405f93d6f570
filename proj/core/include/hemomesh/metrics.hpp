#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "hemomesh/common.hpp"
#include "hemomesh/mesh.hpp"

namespace hemomesh {

// Per-sample prediction accuracy. delta_p = |pred_p - target_p|_2,
// epsilon = |Delta|_2 / |L|_2 with L_p = |target_p|_2.
struct SampleMetrics {
  double epsilon = 0.0;
  double delta_max = 0.0;   // Pa
  double delta_mean = 0.0;  // Pa
  int vertex_count = 0;
};

struct Aggregate {
  double mean = 0.0, median = 0.0, p75 = 0.0;
};

// Test-set metrics. NMAE pools all vertices: mean delta_p over the test set
// divided by the maximum target magnitude across the test set, in percent.
// Per-sample NMAE shares the pooled normalizer so Table-style aggregates
// can be formed for all four columns.
struct SuiteMetrics {
  double nmae = 0.0;  // percent, pooled
  std::vector<double> per_sample_nmae;
  std::vector<SampleMetrics> per_sample;
  Aggregate nmae_agg, epsilon_agg, delta_max_agg, delta_mean_agg;
  double max_target_magnitude = 0.0;  // Pa

  std::string table(const std::string& row_label) const;
};

using Field3 = std::vector<Vec3>;

SampleMetrics sample_metrics(const Field3& pred, const Field3& target);
SuiteMetrics suite_metrics(const std::vector<Field3>& preds,
                           const std::vector<Field3>& targets);

Aggregate aggregate(std::vector<double> values);

// Uniform random rotation (Shoemake quaternion sampling).
Eigen::Matrix3d random_rotation(Rng& rng);

// Paired evaluation on the original and randomly rotated copies of each
// sample. `predict` must run the full pipeline (preprocessing + forward)
// on the mesh it is given. Targets are rotated with the mesh.
struct RotatedEvaluation {
  SuiteMetrics original;
  SuiteMetrics rotated;
  double nmae_ratio = 0.0;  // rotated / original
};

RotatedEvaluation rotated_evaluation(
    const std::function<Field3(const TriangleMesh&)>& predict,
    const std::vector<TriangleMesh>& meshes,
    const std::vector<Field3>& targets, int rotations_per_sample,
    std::uint64_t seed);

TriangleMesh rotate_mesh(const TriangleMesh& mesh, const Eigen::Matrix3d& R);
Field3 rotate_field(const Field3& f, const Eigen::Matrix3d& R);

}  // namespace hemomesh
