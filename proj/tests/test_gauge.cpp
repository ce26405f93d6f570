#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hemomesh/gauge.hpp"
#include "hemomesh/metrics.hpp"
#include "test_util.hpp"

using namespace hemomesh;
using namespace hemomesh::testutil;

namespace {

struct GaugeFixture {
  TriangleMesh mesh;
  AdjacencyGraph graph;
  std::vector<Vec3> normals;
  std::vector<TangentFrame> frames;
  NeighborAngles angles;

  explicit GaugeFixture(TriangleMesh m) : mesh(std::move(m)) {
    graph = build_adjacency(mesh);
    normals = vertex_normals(mesh);
    frames = build_frames(mesh, graph, normals);
    angles = neighbor_angles(mesh, graph, frames);
  }
};

}  // namespace

TEST_CASE("frames are orthonormal and right-handed") {
  GaugeFixture fx(make_tube(1.2, 8.0, 10, 12));
  for (const auto& f : fx.frames) {
    CHECK(std::abs(f.e1.norm() - 1.0) < 1e-12);
    CHECK(std::abs(f.e2.norm() - 1.0) < 1e-12);
    CHECK(std::abs(f.e1.dot(f.e2)) < 1e-12);
    CHECK(std::abs(f.e1.dot(f.n)) < 1e-12);
    CHECK((f.e1.cross(f.e2) - f.n).norm() < 1e-12);
  }
}

TEST_CASE("flat grid frame matches the axis directions") {
  GaugeFixture fx(make_grid(4, 4));
  // Vertex 5 (interior): reference neighbor is its smallest-index neighbor.
  const TangentFrame& f = fx.frames[5];
  CHECK(f.reference_neighbor == fx.graph.neighbors[5].front());
  const Vec3 d =
      (fx.mesh.positions[f.reference_neighbor] - fx.mesh.positions[5])
          .normalized();
  CHECK((f.e1 - d).norm() < 1e-12);
  CHECK((f.n - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("frames co-rotate exactly under rigid rotation") {
  const auto mesh = make_tube(1.4, 9.0, 11, 13);
  Rng rng(5);
  const Eigen::Matrix3d R = random_rotation(rng);
  GaugeFixture fx(mesh), fr(rotate_mesh(mesh, R));
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    CHECK(fx.frames[v].reference_neighbor == fr.frames[v].reference_neighbor);
    CHECK((fr.frames[v].e1 - R * fx.frames[v].e1).norm() < 1e-12);
    CHECK((fr.frames[v].e2 - R * fx.frames[v].e2).norm() < 1e-12);
    CHECK((fr.frames[v].n - R * fx.frames[v].n).norm() < 1e-12);
  }
}

TEST_CASE("degenerate reference projection raises") {
  // A vertex whose only neighbors lie along its normal direction.
  TriangleMesh m;
  m.positions = {{0, 0, 0}, {0, 0, 1}, {1e-12, 0, 2}};
  m.triangles = {{0, 1, 2}};
  const auto graph = build_adjacency(m);
  std::vector<Vec3> normals = {{0, 0, 1}, {1, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(build_frames(m, graph, normals), MeshError);
}

TEST_CASE("planar hexagonal one-ring has angles k*pi/3") {
  // Direct trigonometry oracle: on a flat fan the intrinsic angles equal
  // the tangent-plane projection angles exactly.
  TriangleMesh m;
  m.positions.emplace_back(0, 0, 0);
  for (int i = 0; i < 6; ++i)
    m.positions.emplace_back(std::cos(i * kPi / 3), std::sin(i * kPi / 3), 0);
  for (int i = 0; i < 6; ++i)
    m.triangles.push_back({0, 1 + i, 1 + (i + 1) % 6});
  GaugeFixture fx(std::move(m));
  REQUIRE(fx.frames[0].reference_neighbor == 1);
  std::vector<double> got(fx.angles.theta[0]);
  std::sort(got.begin(), got.end());
  for (int k = 0; k < 6; ++k)
    CHECK(got[k] == doctest::Approx(k * kPi / 3).epsilon(1e-12));
}

TEST_CASE("reference neighbor always has angle zero") {
  GaugeFixture fx(make_tube(1.0, 8.0, 12, 10));
  for (int p = 0; p < fx.mesh.num_vertices(); ++p) {
    const auto& nbr = fx.graph.neighbors[p];
    for (std::size_t k = 0; k < nbr.size(); ++k)
      if (nbr[k] == fx.frames[p].reference_neighbor)
        CHECK(fx.angles.theta[p][k] == 0.0);
  }
}

TEST_CASE("transport antisymmetry holds on every edge") {
  GaugeFixture fx(make_tube(1.3, 7.0, 9, 11));
  for (int p = 0; p < fx.mesh.num_vertices(); ++p)
    for (int q : fx.graph.neighbors[p]) {
      const double g1 = transport_angle(fx.angles, fx.graph, p, q);
      const double g2 = transport_angle(fx.angles, fx.graph, q, p);
      CHECK(std::abs(std::remainder(g1 + g2, kTwoPi)) < 1e-12);
    }
}

TEST_CASE("coplanar vertices with identical frames transport trivially") {
  GaugeFixture fx(make_grid(4, 4));
  // Pick two adjacent interior vertices whose reference directions align.
  // On the flat grid every transport reduces to the frame-angle difference;
  // vertices 5 and 6 both take their left, downward diagonal structure.
  const double g = transport_angle(fx.angles, fx.graph, 5, 6);
  const Vec3 r5 =
      fx.mesh.positions[fx.frames[5].reference_neighbor] - fx.mesh.positions[5];
  const Vec3 r6 =
      fx.mesh.positions[fx.frames[6].reference_neighbor] - fx.mesh.positions[6];
  const double expect =
      wrap_angle(std::atan2(r6.y(), r6.x()) - std::atan2(r5.y(), r5.x()));
  CHECK(std::abs(std::remainder(g - expect, kTwoPi)) < 1e-12);
}

TEST_CASE("flat one-ring holonomy is zero") {
  GaugeFixture fx(make_grid(5, 5));
  // Ring around interior vertex 12: walk its one-ring via fan order.
  const std::vector<int> ring = {7, 8, 13, 17, 16, 11};
  double hol = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i)
    hol += transport_angle(fx.angles, fx.graph, ring[(i + 1) % ring.size()],
                           ring[i]);
  CHECK(std::abs(std::remainder(hol, kTwoPi)) < 1e-12);
}

TEST_CASE("cone ring holonomy equals the apex angle deficit") {
  for (int k : {8, 12, 20}) {
    for (double alpha : {0.35, 0.7, 1.1}) {
      const auto cone = make_cone(k, alpha);
      GaugeFixture fx(cone);
      const double deficit = apex_deficit(cone);
      double hol = 0.0;
      for (int i = 0; i < k; ++i)
        hol += transport_angle(fx.angles, fx.graph, 1 + (i + 1) % k, 1 + i);
      CHECK(std::abs(std::remainder(hol - deficit, kTwoPi)) < 1e-9);
    }
  }
}

TEST_CASE("irrep matrices") {
  const auto q = irrep_matrix(1, kPi / 2);
  CHECK(q(0, 0) == doctest::Approx(0.0));
  CHECK(q(0, 1) == doctest::Approx(-1.0));
  CHECK(q(1, 0) == doctest::Approx(1.0));
  CHECK(irrep_matrix(0, 1.234)(0, 0) == 1.0);
  const auto two = irrep_matrix(2, kPi);
  CHECK(two(0, 0) == doctest::Approx(1.0));
  CHECK(two(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("vector decomposition: normal direction is pure rho_0") {
  GaugeFixture fx(make_tube(1.0, 6.0, 8, 8));
  const TangentFrame& f = fx.frames[10];
  double out[3];
  vector_to_irreps(f.n, f, out);
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(std::abs(out[1]) < 1e-14);
  CHECK(std::abs(out[2]) < 1e-14);
}

TEST_CASE("identity matrix decomposes to rho_0 = (1, 2, 0)") {
  GaugeFixture fx(make_tube(1.0, 6.0, 8, 8));
  double out[9];
  matrix_to_irreps(Eigen::Matrix3d::Identity(), fx.frames[4], out);
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(out[1] == doctest::Approx(2.0));
  for (int i = 2; i < 9; ++i) CHECK(std::abs(out[i]) < 1e-14);
}

TEST_CASE("decomposition transforms by irreps under gauge rotation") {
  // Numerical gauge-equivariance oracle: rotate the frame by g, compare
  // rotated components against irrep_matrix(n, -g) applied to originals.
  GaugeFixture fx(make_tube(1.5, 7.0, 9, 9));
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int p = static_cast<int>(rng.uniform_int(fx.mesh.num_vertices()));
    const double g = rng.uniform(0.0, kTwoPi);
    TangentFrame f = fx.frames[p];
    TangentFrame fg = f;
    fg.e1 = std::cos(g) * f.e1 + std::sin(g) * f.e2;
    fg.e2 = -std::sin(g) * f.e1 + std::cos(g) * f.e2;

    Eigen::Matrix3d M;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) M(i, j) = rng.normal();
    double a[9], b[9];
    matrix_to_irreps(M, f, a);
    matrix_to_irreps(M, fg, b);
    // rho_0 components invariant
    for (int i = 0; i < 3; ++i)
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
    // rho_1 pairs rotate by irrep_matrix(1, -g)
    const auto r1 = irrep_matrix(1, -g);
    for (int pair = 0; pair < 2; ++pair) {
      const double x = a[3 + 2 * pair], y = a[4 + 2 * pair];
      CHECK(b[3 + 2 * pair] ==
            doctest::Approx(r1(0, 0) * x + r1(0, 1) * y).epsilon(1e-10));
      CHECK(b[4 + 2 * pair] ==
            doctest::Approx(r1(1, 0) * x + r1(1, 1) * y).epsilon(1e-10));
    }
    // rho_2 pair rotates by irrep_matrix(2, -g)
    const auto r2 = irrep_matrix(2, -g);
    CHECK(b[7] == doctest::Approx(r2(0, 0) * a[7] + r2(0, 1) * a[8])
                      .epsilon(1e-10));
    CHECK(b[8] == doctest::Approx(r2(1, 0) * a[7] + r2(1, 1) * a[8])
                      .epsilon(1e-10));
  }
}

TEST_CASE("theta and gamma are invariant under rigid motion") {
  const auto mesh = make_tube(1.2, 8.0, 10, 11);
  Rng rng(23);
  auto moved = rotate_mesh(mesh, random_rotation(rng));
  for (auto& p : moved.positions) p += Vec3(1.5, -2.0, 0.25);
  GaugeFixture fx(mesh), fm(std::move(moved));
  for (int p = 0; p < mesh.num_vertices(); ++p)
    for (std::size_t k = 0; k < fx.graph.neighbors[p].size(); ++k) {
      CHECK(std::abs(std::remainder(
                fx.angles.theta[p][k] - fm.angles.theta[p][k], kTwoPi)) <
            1e-10);
      const int q = fx.graph.neighbors[p][k];
      CHECK(std::abs(std::remainder(
                transport_angle(fx.angles, fx.graph, p, q) -
                    transport_angle(fm.angles, fm.graph, p, q),
                kTwoPi)) < 1e-10);
    }
}

TEST_CASE("RepType layout arithmetic") {
  const RepType rep{{{0, 3}, {1, 2}, {2, 1}}};
  CHECK(rep.dim() == 9);
  CHECK(rep.max_order() == 2);
  CHECK(rep.offset(0) == 0);
  CHECK(rep.offset(1) == 3);
  CHECK(rep.offset(2) == 7);
  const RepType cat = RepType::concat(rep, RepType::scalars(2));
  CHECK(cat.dim() == 11);
  CHECK(RepType::uniform(4, 2).dim() == 20);
}
