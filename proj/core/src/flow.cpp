#include "hemomesh/flow.hpp"

#include <cmath>
#include <limits>

namespace hemomesh {

double reynolds(double rho, double u, double diameter_cm, double mu) {
  if (!(rho > 0.0 && u >= 0.0 && diameter_cm > 0.0 && mu > 0.0))
    throw ConfigError("reynolds: inputs must be positive");
  return rho * u * diameter_cm / mu;
}

double poiseuille_wss(double mu, double u_mean, double radius_cm) {
  if (!(mu > 0.0 && u_mean >= 0.0 && radius_cm > 0.0))
    throw ConfigError("poiseuille_wss: inputs must be positive");
  const double tau_dyn = 4.0 * mu * u_mean / radius_cm;  // dyn/cm^2
  return 0.1 * tau_dyn;                                  // Pa
}

WSSField surrogate_wss_field(const TriangleMesh& mesh,
                             const std::vector<Vec3>& normals,
                             const CenterlineFlow& flow, double mu) {
  if (flow.samples.empty())
    throw ConfigError("surrogate_wss_field: missing centerline");
  WSSField field;
  field.vectors.resize(mesh.positions.size());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Vec3& p = mesh.positions[v];
    double best = std::numeric_limits<double>::max();
    const CenterlineSample* nearest = nullptr;
    for (const auto& s : flow.samples) {
      const double d = (p - s.point).squaredNorm();
      if (d < best) {
        best = d;
        nearest = &s;
      }
    }
    const double tau =
        poiseuille_wss(mu, nearest->u_mean, nearest->r_eff_mm * 0.1);
    const Vec3& n = normals[v];
    Vec3 dir = nearest->tangent - nearest->tangent.dot(n) * n;
    const double dn = dir.norm();
    if (dn <= 1e-9) {
      field.vectors[v] = Vec3::Zero();  // degenerate projection
    } else {
      field.vectors[v] = (tau / dn) * dir;
    }
  }
  return field;
}

bool is_tangential(const WSSField& field, const std::vector<Vec3>& normals,
                   double tol) {
  for (std::size_t v = 0; v < field.vectors.size(); ++v) {
    const double mag = field.vectors[v].norm();
    if (mag == 0.0) continue;
    if (std::abs(field.vectors[v].dot(normals[v])) > tol * mag) return false;
  }
  return true;
}

}  // namespace hemomesh
