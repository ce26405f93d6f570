#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hemomesh/common.hpp"
#include "hemomesh/kernel_basis.hpp"

using namespace hemomesh;

namespace {

// Max constraint residual of an angular kernel element over random probes.
double neighbor_residual(const AngularKernel& k, IrrepType in, IrrepType out,
                         Rng& rng, int probes = 64) {
  double worst = 0.0;
  for (int t = 0; t < probes; ++t) {
    const double g = rng.uniform(0.0, kTwoPi);
    const double theta = rng.uniform(0.0, kTwoPi);
    const Eigen::MatrixXd lhs = k.eval(theta - g);
    const Eigen::MatrixXd rhs =
        irrep_matrix(out.order, -g) * k.eval(theta) * irrep_matrix(in.order, g);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

double self_residual(const Eigen::MatrixXd& b, IrrepType in, IrrepType out,
                     Rng& rng, int probes = 64) {
  double worst = 0.0;
  for (int t = 0; t < probes; ++t) {
    const double g = rng.uniform(0.0, kTwoPi);
    const Eigen::MatrixXd lhs = irrep_matrix(out.order, g) * b;
    const Eigen::MatrixXd rhs = b * irrep_matrix(in.order, g);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("self kernel: scalar to scalar is the identity span") {
  const auto basis = solve_self_kernel({0}, {0});
  REQUIRE(basis.dim() == 1);
  CHECK(std::abs(std::abs(basis.elements[0](0, 0)) - 1.0) < 1e-12);
}

TEST_CASE("self kernel: rho_1 -> rho_2 is empty") {
  CHECK(solve_self_kernel({1}, {2}).dim() == 0);
}

TEST_CASE("self kernel: rho_1 -> rho_1 spans identity and quarter turn") {
  const auto basis = solve_self_kernel({1}, {1});
  REQUIRE(basis.dim() == 2);
  Rng rng(1);
  for (const auto& b : basis.elements)
    CHECK(self_residual(b, {1}, {1}, rng) < 1e-10);
}

TEST_CASE("neighbor kernel: scalars admit only constants") {
  const auto basis = solve_neighbor_kernel({0}, {0}, 0);
  REQUIRE(basis.dim() == 1);
  const auto k0 = basis.elements[0].eval(0.3);
  const auto k1 = basis.elements[0].eval(4.5);
  CHECK(std::abs(k0(0, 0) - k1(0, 0)) < 1e-12);
}

TEST_CASE("neighbor kernel: rho_0 -> rho_1 has dimension 2") {
  // Numerical nullspace oracle (the solver itself), cross-checked by the
  // defining constraint at random probes.
  const auto basis = solve_neighbor_kernel({0}, {1}, 1);
  REQUIRE(basis.dim() == 2);
  Rng rng(2);
  for (const auto& k : basis.elements)
    CHECK(neighbor_residual(k, {0}, {1}, rng) < 1e-10);
}

TEST_CASE("all basis elements satisfy the constraint at 64 random probes") {
  Rng rng(3);
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; b <= 2; ++b) {
      const auto nb = solve_neighbor_kernel({a}, {b}, a + b);
      for (const auto& k : nb.elements)
        CHECK(neighbor_residual(k, {a}, {b}, rng) < 1e-10);
      const auto sb = solve_self_kernel({a}, {b});
      for (const auto& m : sb.elements)
        CHECK(self_residual(m, {a}, {b}, rng) < 1e-10);
    }
}

TEST_CASE("basis dimensions are stable across sampling densities") {
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; b <= 2; ++b) {
      const int d8 = solve_neighbor_kernel({a}, {b}, a + b, 8).dim();
      const int d16 = solve_neighbor_kernel({a}, {b}, a + b, 16).dim();
      const int d32 = solve_neighbor_kernel({a}, {b}, a + b, 32).dim();
      CHECK(d8 == d16);
      CHECK(d16 == d32);
      CHECK(solve_self_kernel({a}, {b}, 8).dim() ==
            solve_self_kernel({a}, {b}, 32).dim());
    }
}

TEST_CASE("bases are orthonormal and deterministic across reruns") {
  const auto b1 = solve_neighbor_kernel({1}, {1}, 2);
  const auto b2 = solve_neighbor_kernel({1}, {1}, 2);
  REQUIRE(b1.dim() == b2.dim());
  for (int i = 0; i < b1.dim(); ++i)
    for (std::size_t m = 0; m < b1.elements[i].C.size(); ++m) {
      CHECK((b1.elements[i].C[m] - b2.elements[i].C[m]).norm() == 0.0);
      CHECK((b1.elements[i].S[m] - b2.elements[i].S[m]).norm() == 0.0);
    }
  // Orthonormality in coefficient space.
  auto dot = [](const AngularKernel& x, const AngularKernel& y) {
    double d = 0.0;
    for (std::size_t m = 0; m < x.C.size(); ++m)
      d += (x.C[m].array() * y.C[m].array()).sum() +
           (x.S[m].array() * y.S[m].array()).sum();
    return d;
  };
  for (int i = 0; i < b1.dim(); ++i)
    for (int j = 0; j < b1.dim(); ++j)
      CHECK(dot(b1.elements[i], b1.elements[j]) ==
            doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
}

TEST_CASE("a too-small frequency cap is flagged") {
  const auto capped = solve_neighbor_kernel({1}, {2}, 1);
  CHECK(capped.capped);
  const auto full = solve_neighbor_kernel({1}, {2}, 3);
  CHECK_FALSE(full.capped);
  CHECK(capped.dim() < full.dim());
}

TEST_CASE("layer basis: scalar block counts") {
  // in = out = 4 scalar channels: every self pair has the 1-dim basis,
  // giving 16 trainable self coefficients.
  const RepType rep = RepType::scalars(4);
  const auto lb = assemble_layer_basis(rep, rep, 2);
  CHECK(lb.self_coeff_count == 16);
  CHECK(lb.neighbor_coeff_count == 16);
}

TEST_CASE("layer basis counts sum over block bases") {
  // in = {rho_0, rho_1}, out = {rho_1}: coefficient count per kernel is the
  // sum of the per-pair basis dimensions (computed by the solver).
  const RepType in{{{0, 1}, {1, 1}}};
  const RepType out{{{1, 1}}};
  const auto lb = assemble_layer_basis(in, out, 2);
  const int d01 = solve_neighbor_kernel({0}, {1}, 1).dim();
  const int d11 = solve_neighbor_kernel({1}, {1}, 2).dim();
  CHECK(lb.neighbor_coeff_count == d01 + d11);
  const int s01 = solve_self_kernel({0}, {1}).dim();
  const int s11 = solve_self_kernel({1}, {1}).dim();
  CHECK(lb.self_coeff_count == s01 + s11);
}

TEST_CASE("empty rep yields zero coefficients") {
  const RepType empty{};
  const auto lb = assemble_layer_basis(empty, RepType::scalars(3), 2);
  CHECK(lb.coefficient_count() == 0);
}
