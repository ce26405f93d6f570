#pragma once

#include <vector>

#include "hemomesh/mesh.hpp"

namespace hemomesh {

// Steady-flow parameters in CGS units (pressure in kPa).
struct FlowParams {
  double mu = 0.035;     // dynamic viscosity [g/(cm s)]
  double rho = 1.05;     // blood density [g/cm^3]
  double u_in = 20.0;    // inlet mean speed [cm/s]
  double p_out = 13.332; // outlet pressure [kPa]
};

// Re = rho u D / mu (D in cm).
double reynolds(double rho, double u, double diameter_cm, double mu);

// Laminar pipe wall shear tau = 4 mu u_mean / r, converted to Pa
// (1 dyn/cm^2 = 0.1 Pa). r in cm.
double poiseuille_wss(double mu, double u_mean, double radius_cm);

// Sampled centerline with per-point flow state; the surrogate oracle
// evaluates the nearest sample to every wall vertex.
struct CenterlineSample {
  Vec3 point;       // mm
  Vec3 tangent;     // unit, flow direction
  double r_eff_mm;  // effective lumen radius sqrt(area/pi)
  double u_mean;    // cm/s from mass conservation
};

struct CenterlineFlow {
  std::vector<CenterlineSample> samples;  // all branches concatenated
};

// Per-vertex WSS vectors [Pa], tangential to the wall.
struct WSSField {
  std::vector<Vec3> vectors;
  enum class Provenance { surrogate, external } provenance =
      Provenance::surrogate;
};

// Analytic surrogate replacing the CFD ground truth: Poiseuille magnitude
// from local mean speed and effective radius, direction = centerline
// tangent projected into the wall tangent plane.
WSSField surrogate_wss_field(const TriangleMesh& mesh,
                             const std::vector<Vec3>& normals,
                             const CenterlineFlow& flow, double mu);

// |WSS . normal| <= tol * |WSS| at every vertex.
bool is_tangential(const WSSField& field, const std::vector<Vec3>& normals,
                   double tol = 1e-6);

}  // namespace hemomesh
