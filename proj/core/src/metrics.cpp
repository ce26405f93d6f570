#include "hemomesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace hemomesh {

SampleMetrics sample_metrics(const Field3& pred, const Field3& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ConfigError("sample_metrics: vertex sets must match and be nonempty");
  double delta2 = 0.0, l2 = 0.0, dmax = 0.0, dsum = 0.0;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    const double d = (pred[v] - target[v]).norm();
    const double l = target[v].norm();
    delta2 += d * d;
    l2 += l * l;
    dmax = std::max(dmax, d);
    dsum += d;
  }
  if (l2 == 0.0)
    throw NumericError("sample_metrics: all-zero target, epsilon undefined");
  SampleMetrics m;
  m.epsilon = std::sqrt(delta2) / std::sqrt(l2);
  m.delta_max = dmax;
  m.delta_mean = dsum / static_cast<double>(pred.size());
  m.vertex_count = static_cast<int>(pred.size());
  return m;
}

Aggregate aggregate(std::vector<double> values) {
  if (values.empty()) throw ConfigError("aggregate: empty list");
  Aggregate a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    // Linear interpolation between order statistics.
    const double pos = q * (static_cast<double>(values.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    const double w = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - w) + values[hi] * w;
  };
  a.median = quantile(0.5);
  a.p75 = quantile(0.75);
  return a;
}

SuiteMetrics suite_metrics(const std::vector<Field3>& preds,
                           const std::vector<Field3>& targets) {
  if (preds.size() != targets.size() || preds.empty())
    throw ConfigError("suite_metrics: empty or mismatched test set");
  SuiteMetrics s;
  double max_l = 0.0;
  for (const auto& t : targets)
    for (const auto& v : t) max_l = std::max(max_l, v.norm());
  if (max_l == 0.0)
    throw NumericError("suite_metrics: all targets are zero");
  s.max_target_magnitude = max_l;

  double dsum_all = 0.0;
  std::size_t count_all = 0;
  std::vector<double> eps, dmax, dmean;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const SampleMetrics m = sample_metrics(preds[i], targets[i]);
    s.per_sample.push_back(m);
    eps.push_back(m.epsilon);
    dmax.push_back(m.delta_max);
    dmean.push_back(m.delta_mean);
    s.per_sample_nmae.push_back(100.0 * m.delta_mean / max_l);
    dsum_all += m.delta_mean * m.vertex_count;
    count_all += static_cast<std::size_t>(m.vertex_count);
  }
  s.nmae = 100.0 * (dsum_all / static_cast<double>(count_all)) / max_l;
  s.nmae_agg = aggregate(s.per_sample_nmae);
  s.epsilon_agg = aggregate(eps);
  s.delta_max_agg = aggregate(dmax);
  s.delta_mean_agg = aggregate(dmean);
  return s;
}

std::string SuiteMetrics::table(const std::string& row_label) const {
  char buf[512];
  std::string out =
      "                     NMAE [%]             eps [%]              "
      "dmax [Pa]            dmean [Pa]\n"
      "                 mean  median    75th | mean  median    75th | "
      "mean  median    75th | mean  median    75th\n";
  std::snprintf(
      buf, sizeof(buf),
      "%-14s %6.2f  %6.2f  %6.2f |%5.1f  %6.1f  %6.1f |%5.2f  %6.2f  %6.2f "
      "|%5.3f  %6.3f  %6.3f\n",
      row_label.c_str(), nmae_agg.mean, nmae_agg.median, nmae_agg.p75,
      100.0 * epsilon_agg.mean, 100.0 * epsilon_agg.median,
      100.0 * epsilon_agg.p75, delta_max_agg.mean, delta_max_agg.median,
      delta_max_agg.p75, delta_mean_agg.mean, delta_mean_agg.median,
      delta_mean_agg.p75);
  out += buf;
  std::snprintf(buf, sizeof(buf), "pooled NMAE %.3f %%  (max |l| = %.3f Pa)\n",
                nmae, max_target_magnitude);
  out += buf;
  return out;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Shoemake: uniform unit quaternion from three uniforms.
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double s1 = std::sqrt(1.0 - u1), s2 = std::sqrt(u1);
  const double w = s1 * std::sin(kTwoPi * u2);
  const double x = s1 * std::cos(kTwoPi * u2);
  const double y = s2 * std::sin(kTwoPi * u3);
  const double z = s2 * std::cos(kTwoPi * u3);
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

TriangleMesh rotate_mesh(const TriangleMesh& mesh, const Eigen::Matrix3d& R) {
  TriangleMesh out = mesh;
  for (auto& p : out.positions) p = R * p;
  return out;
}

Field3 rotate_field(const Field3& f, const Eigen::Matrix3d& R) {
  Field3 out = f;
  for (auto& v : out) v = R * v;
  return out;
}

RotatedEvaluation rotated_evaluation(
    const std::function<Field3(const TriangleMesh&)>& predict,
    const std::vector<TriangleMesh>& meshes,
    const std::vector<Field3>& targets, int rotations_per_sample,
    std::uint64_t seed) {
  if (meshes.size() != targets.size() || meshes.empty())
    throw ConfigError("rotated_evaluation: empty or mismatched test set");
  Rng rng(seed);
  std::vector<Field3> preds, rot_preds, rot_targets;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    preds.push_back(predict(meshes[i]));
    for (int k = 0; k < rotations_per_sample; ++k) {
      const Eigen::Matrix3d R = random_rotation(rng);
      rot_preds.push_back(predict(rotate_mesh(meshes[i], R)));
      rot_targets.push_back(rotate_field(targets[i], R));
    }
  }
  RotatedEvaluation ev;
  ev.original = suite_metrics(preds, targets);
  if (rotations_per_sample > 0) {
    ev.rotated = suite_metrics(rot_preds, rot_targets);
    ev.nmae_ratio = ev.rotated.nmae / ev.original.nmae;
  }
  return ev;
}

}  // namespace hemomesh
