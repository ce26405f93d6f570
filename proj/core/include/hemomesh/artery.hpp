#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hemomesh/flow.hpp"
#include "hemomesh/mesh.hpp"

namespace hemomesh {

struct Stenosis {
  double center_arclength = 0.0;  // mm from inlet
  double length = 0.0;            // mm
  double severity = 0.0;          // fractional radius reduction, (0, 0.5]
  double eccentricity = 0.0;      // angular asymmetry amplitude, [0, 0.4]
  double phase = 0.0;             // angular position of the deepest point
};

// Idealized single coronary artery: planar centerline with fixed x steps
// and random y steps, circular lumen of random base radius, up to two
// asymmetric stenoses.
struct SingleArterySpec {
  std::vector<Vec3> control_points;  // mm
  double radius = 1.6;               // mm, in [1.25, 2.0]
  std::vector<Stenosis> stenoses;    // <= 2
  FlowParams flow;                   // mu=0.035, rho=1.05, u_in=20
  std::uint64_t seed = 0;
};

// Left-main coronary bifurcation: proximal main vessel (PMV), distal main
// vessel (DMV), side branch (SB). Angles in degrees, radii in mm. The
// bifurcation law (d_PMV)^a = (d_DMV)^a + (d_SB)^a + delta is satisfied
// exactly (delta = 0) via a per-sample exponent whenever the parent radius
// dominates; otherwise the default exponent is kept and delta recorded.
struct BifurcationSpec {
  double beta = 0.0;        // angle DMV-SB
  double beta_prime = 0.0;  // angle bisector-SB (skew)
  double gamma_plane = 0.0; // PMV entry angle into the bifurcation plane
  double r_pmv = 0.0, r_dmv = 0.0, r_sb = 0.0;  // mm
  double ellipse_aspect = 1.0;   // minor/major axis ratio of lumen ellipses
  double ellipse_angle = 0.0;    // orientation in the normal plane
  double law_exponent = 2.33;
  double law_delta = 0.0;        // residual in the law (diameters in mm)
  bool law_exact = false;        // true when solved with delta == 0
  double len_pmv = 0.0, len_dmv = 0.0, len_sb = 0.0;  // mm
  double taper = 0.15;           // linear radius decrease over each branch
  FlowParams flow;               // mu=0.04, rho=1.06, u_in=11.8
  std::uint64_t seed = 0;
};

SingleArterySpec sample_single_artery(std::uint64_t seed);
BifurcationSpec sample_bifurcation(std::uint64_t seed);

// Lofted, tagged surface mesh plus the centerline flow state the surrogate
// oracle consumes. Meshes pass validate(); rims stay open, the single
// artery has inlet+outlet, the bifurcation inlet+two outlets.
struct LoftResult {
  TriangleMesh mesh;
  CenterlineFlow flow;
};

LoftResult loft_single_artery(const SingleArterySpec& spec,
                              double edge_length);
LoftResult loft_bifurcation(const BifurcationSpec& spec, double edge_length);

// Local radius of the single-artery lumen at arclength s and angle phi,
// including stenosis modulation (angular mean preserves 1 - severity).
double single_artery_radius(const SingleArterySpec& spec, double s,
                            double phi);
// Effective radius sqrt(area/pi) of the cross-section at arclength s.
double single_artery_effective_radius(const SingleArterySpec& spec, double s);

enum class DatasetKind { single, bifurcating };

struct GenerateOptions {
  DatasetKind kind = DatasetKind::single;
  int count = 10;
  std::uint64_t seed = 1;
  double edge_length = 0.0;  // <= 0: paper defaults (0.4 single / 0.2 bif)
  int redraw_budget = 25;    // re-draws per sample on lofting failure
};

struct GeneratedSample {
  std::string id;
  TriangleMesh mesh;
  WSSField wss;
  std::string split;  // train | val | test
  std::uint64_t seed = 0;
  std::string spec_json;
};

// Deterministic in (kind, count, seed). The mesh of every sample passes
// validate(). Split tags are an 80:10:10 seeded shuffle.
std::vector<GeneratedSample> generate_samples(const GenerateOptions& opt);

double default_edge_length(DatasetKind kind);

}  // namespace hemomesh
