#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ad_test_util.hpp"
#include "hemomesh/conv.hpp"
#include "hemomesh/metrics.hpp"
#include "hemomesh/pooling.hpp"
#include "hemomesh/unet.hpp"
#include "test_util.hpp"

using namespace hemomesh;
using namespace hemomesh::testutil;

namespace {

struct ConvFixture {
  TriangleMesh mesh;
  AdjacencyGraph graph;
  std::vector<Vec3> normals;
  std::vector<TangentFrame> frames;
  LevelTopo topo;

  ConvFixture() : mesh(make_tube(1.2, 6.0, 8, 7)) {
    graph = build_adjacency(mesh);
    normals = vertex_normals(mesh);
    frames = build_frames(mesh, graph, normals);
    topo = build_level0_topo(mesh, graph, frames, normals);
  }
};

std::shared_ptr<const GemConvCtx<double>> make_gem_ctx(
    const GemLevelPlan<double>& plan, const RepType& rin,
    const RepType& rout) {
  auto ctx = std::make_shared<GemConvCtx<double>>();
  ctx->plan = &plan;
  ctx->in = rin;
  ctx->out = rout;
  ctx->layout =
      gem_coeff_layout(rin, rout, assemble_layer_basis(rin, rout, 2));
  ctx->max_order = 2;
  return ctx;
}

}  // namespace

TEST_CASE("backward of x^2 at x = 3 gives 6") {
  ad::Tape<double> tape;
  MatX<double> x(1, 1);
  x(0, 0) = 3.0;
  const int xi = tape.leaf(x, true);
  const int sq =
      ad::mse_loss(tape, xi, tape.constant(MatX<double>::Zero(1, 1)));
  tape.backward(sq);
  CHECK(tape.grad(xi)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("mse gradient is (2/N)(pred - target)") {
  Rng rng(4);
  ad::Tape<double> tape;
  const MatX<double> p = random_matrix(5, 3, rng);
  const MatX<double> t = random_matrix(5, 3, rng);
  const int pi = tape.leaf(p, true);
  const int loss = ad::mse_loss(tape, pi, tape.constant(t));
  tape.backward(loss);
  const MatX<double> expect = (p - t) * (2.0 / 15.0);
  CHECK((tape.grad(pi) - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mse examples") {
  ad::Tape<double> tape;
  MatX<double> pred(4, 3), target(4, 3);
  pred.setZero();
  target.setZero();
  SUBCASE("identical inputs give zero") {
    const int l = ad::mse_loss(tape, tape.leaf(pred), tape.constant(target));
    CHECK(tape.value(l)(0, 0) == 0.0);
  }
  SUBCASE("constant unit-x residual gives 1/3") {
    pred.col(0).setConstant(1.0);
    const int l = ad::mse_loss(tape, tape.leaf(pred), tape.constant(target));
    CHECK(tape.value(l)(0, 0) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("doubling residuals quadruples the loss") {
    pred.setRandom();
    const int l1 = ad::mse_loss(tape, tape.leaf(pred), tape.constant(target));
    const int l2 = ad::mse_loss(tape, tape.leaf(MatX<double>(2.0 * pred)),
                                tape.constant(target));
    CHECK(tape.value(l2)(0, 0) == doctest::Approx(4.0 * tape.value(l1)(0, 0)));
  }
}

TEST_CASE("shape mismatch raises") {
  ad::Tape<double> tape;
  const int a = tape.leaf(MatX<double>::Zero(3, 2));
  const int b = tape.leaf(MatX<double>::Zero(2, 2));
  CHECK_THROWS_AS(ad::mse_loss(tape, a, b), ConfigError);
  CHECK_THROWS_AS(ad::add(tape, a, b), ConfigError);
}

TEST_CASE("backward without a recorded forward is a usage error") {
  ad::Tape<double> tape;
  const int leaf = tape.constant(MatX<double>::Zero(1, 1));
  CHECK_THROWS_AS(tape.backward(leaf), ConfigError);
  CHECK_THROWS_AS(tape.backward(leaf + 5), ConfigError);
}

TEST_CASE("gradcheck: dense ops") {
  Rng rng(11);
  SUBCASE("matmul") {
    gradcheck(
        [](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::matmul(t, ids[0], ids[1]);
        },
        {random_matrix(4, 3, rng), random_matrix(3, 5, rng)}, rng);
  }
  SUBCASE("add + concat") {
    gradcheck(
        [](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::concat_cols(t, ad::add(t, ids[0], ids[1]), ids[2]);
        },
        {random_matrix(4, 3, rng), random_matrix(4, 3, rng),
         random_matrix(4, 2, rng)},
        rng);
  }
  SUBCASE("relu") {
    MatX<double> x = random_matrix(5, 4, rng);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (std::abs(x.data()[i]) < 0.05) x.data()[i] += 0.1;
    gradcheck(
        [](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::relu(t, ids[0]);
        },
        {x}, rng);
  }
  SUBCASE("mse") {
    gradcheck(
        [](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::mse_loss(t, ids[0], ids[1]);
        },
        {random_matrix(6, 3, rng), random_matrix(6, 3, rng)}, rng);
  }
}

TEST_CASE("gradcheck: isotropic and attention convolutions") {
  ConvFixture fx;
  Rng rng(13);
  const int nv = fx.topo.nv;
  for (int trial = 0; trial < 3; ++trial) {
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::conv_isotropic(t, ids[0], ids[1], ids[2], fx.topo);
        },
        {random_matrix(nv, 3, rng), random_matrix(3, 4, rng),
         random_matrix(3, 4, rng)},
        rng);
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::conv_attention(t, ids[0], ids[1], ids[2], ids[3],
                                    fx.topo);
        },
        {random_matrix(nv, 3, rng), random_matrix(3, 4, rng),
         random_matrix(3, 4, rng), random_matrix(3, 1, rng, 0.5)},
        rng);
  }
}

TEST_CASE("gradcheck: gem convolution and gem linear") {
  ConvFixture fx;
  Rng rng(17);
  const auto plan = build_gem_plan<double>(fx.topo, 2, 2);
  const RepType rin{{{0, 2}, {1, 1}, {2, 1}}};
  const RepType rout{{{0, 1}, {1, 2}}};
  auto ctx = make_gem_ctx(plan, rin, rout);
  for (int trial = 0; trial < 3; ++trial) {
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::conv_gem(t, ids[0], ids[1], ids[2], ctx);
        },
        {random_matrix(fx.topo.nv, rin.dim(), rng),
         random_matrix(static_cast<int>(ctx->layout.self_count), 1, rng),
         random_matrix(static_cast<int>(ctx->layout.neighbor_count), 1, rng)},
        rng);
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::gem_linear(t, ids[0], ids[1], ctx);
        },
        {random_matrix(fx.topo.nv, rin.dim(), rng),
         random_matrix(static_cast<int>(ctx->layout.self_count), 1, rng)},
        rng);
  }
}

TEST_CASE("gradcheck: pooling and unpooling") {
  ConvFixture fx;
  Rng rng(19);
  const auto hier = build_hierarchy(fx.mesh, fx.graph, fx.frames, fx.normals,
                                    {0.25}, 1);
  const PoolLevel& lvl = hier.pools[0];
  const RepType rep{{{0, 1}, {1, 1}, {2, 1}}};
  for (const RepType* rp : {static_cast<const RepType*>(nullptr), &rep}) {
    const int cols = rp ? rp->dim() : 4;
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::pool(t, ids[0], lvl, rp);
        },
        {random_matrix(lvl.n_fine, cols, rng)}, rng);
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::unpool(t, ids[0], lvl, rp);
        },
        {random_matrix(lvl.n_coarse, cols, rng)}, rng);
  }
}

TEST_CASE("gradcheck: regular relu and output projection") {
  Rng rng(23);
  const RepType rep{{{0, 2}, {1, 2}, {2, 2}}};
  gradcheck(
      [&](ad::Tape<double>& t, const std::vector<int>& ids) {
        return ad::regular_relu(t, ids[0], rep, 8);
      },
      {random_matrix(10, rep.dim(), rng)}, rng);

  MatX<double> frame_basis(6, 9);
  for (int p = 0; p < 6; ++p) {
    Rng r2(100 + p);
    const Eigen::Matrix3d R = random_rotation(r2);
    for (int d = 0; d < 3; ++d) {
      frame_basis(p, d) = R(d, 0);
      frame_basis(p, 3 + d) = R(d, 1);
      frame_basis(p, 6 + d) = R(d, 2);
    }
  }
  for (bool with_normal : {false, true}) {
    gradcheck(
        [&](ad::Tape<double>& t, const std::vector<int>& ids) {
          return ad::project_to_world(t, ids[0], &frame_basis, with_normal);
        },
        {random_matrix(6, with_normal ? 3 : 2, rng)}, rng);
  }
}

TEST_CASE("gradcheck: a small end-to-end layer stack") {
  // conv -> regular relu -> pool -> conv -> unpool -> head -> projection.
  ConvFixture fx;
  Rng rng(29);
  const auto hier = build_hierarchy(fx.mesh, fx.graph, fx.frames, fx.normals,
                                    {0.5}, 1);
  const auto plan0 = build_gem_plan<double>(hier.topo[0], 2, 2);
  const auto plan1 = build_gem_plan<double>(hier.topo[1], 2, 2);
  const RepType rep{{{0, 1}, {1, 1}, {2, 1}}};
  auto ctx0 = make_gem_ctx(plan0, rep, rep);
  auto ctx1 = make_gem_ctx(plan1, rep, rep);

  MatX<double> frame_basis(fx.topo.nv, 9);
  for (int p = 0; p < fx.topo.nv; ++p)
    for (int d = 0; d < 3; ++d) {
      frame_basis(p, d) = fx.frames[p].e1[d];
      frame_basis(p, 3 + d) = fx.frames[p].e2[d];
      frame_basis(p, 6 + d) = fx.frames[p].n[d];
    }
  const RepType out_rep{{{1, 1}}};
  auto head = make_gem_ctx(plan0, rep, out_rep);

  gradcheck(
      [&](ad::Tape<double>& t, const std::vector<int>& ids) {
        int x = ad::conv_gem(t, ids[0], ids[1], ids[2], ctx0);
        x = ad::regular_relu(t, x, rep, 8);
        x = ad::pool(t, x, hier.pools[0], &rep);
        x = ad::conv_gem(t, x, ids[3], ids[4], ctx1);
        x = ad::unpool(t, x, hier.pools[0], &rep);
        x = ad::gem_linear(t, x, ids[5], head);
        return ad::project_to_world(t, x, &frame_basis, false);
      },
      {random_matrix(fx.topo.nv, rep.dim(), rng),
       random_matrix(static_cast<int>(ctx0->layout.self_count), 1, rng),
       random_matrix(static_cast<int>(ctx0->layout.neighbor_count), 1, rng),
       random_matrix(static_cast<int>(ctx1->layout.self_count), 1, rng),
       random_matrix(static_cast<int>(ctx1->layout.neighbor_count), 1, rng),
       random_matrix(static_cast<int>(head->layout.self_count), 1, rng)},
      rng);
}
