#pragma once

#include <memory>
#include <vector>

#include "hemomesh/autodiff.hpp"
#include "hemomesh/gauge.hpp"
#include "hemomesh/kernel_basis.hpp"

namespace hemomesh {

// Message-passing support at one hierarchy level: directed edges grouped by
// destination vertex, with orientation angles theta (in the destination's
// gauge) and transport angles gamma (source gauge -> destination gauge).
// theta is NaN for edges whose chord projects to zero; GEM convolution
// skips those (counted), the Euclidean variants keep them.
struct LevelTopo {
  int nv = 0;
  std::vector<int> row_begin;  // size nv + 1
  std::vector<int> src;        // edge source, local index
  std::vector<int> dst;        // edge destination, local index
  std::vector<double> theta;
  std::vector<double> gamma;
  std::vector<double> inv_deg;  // 1 / |N(p)|, 0 for isolated vertices
  int isolated = 0;
  int skipped_theta = 0;
  double mean_degree = 0.0;

  int num_edges() const { return static_cast<int>(src.size()); }
};

// Level-0 topology straight from the one-ring graph and gauges.
LevelTopo build_level0_topo(const TriangleMesh& mesh,
                            const AdjacencyGraph& graph,
                            const std::vector<TangentFrame>& frames,
                            const std::vector<Vec3>& normals);

// Precomputed per-edge data for GEM convolution at one level: for every
// irrep order pair (a, b) the neighbor-kernel basis evaluated at theta_e
// (stored transposed, da x db row-major, basis-element major), and the
// transport rotation cos/sin of n*gamma_e for n = 1..max_order.
template <typename T>
struct GemLevelPlan {
  const LevelTopo* topo = nullptr;
  int max_order = 2;
  int freq_cap = 2;
  std::vector<char> edge_valid;
  // pair index = a * (max_order+1) + b
  std::vector<int> nbasis;            // basis elements per pair
  std::vector<std::vector<T>> bval;   // [pair][(e * nb + k) * da * db + ...]
  std::vector<std::vector<T>> rcos;   // [n-1][edge]
  std::vector<std::vector<T>> rsin;   // [n-1][edge]
  // self-kernel basis per pair, element-major (da x db row-major, transposed)
  std::vector<int> nself;
  std::vector<std::vector<T>> sval;
};

template <typename T>
GemLevelPlan<T> build_gem_plan(const LevelTopo& topo, int max_order,
                               int freq_cap) {
  GemLevelPlan<T> plan;
  plan.topo = &topo;
  plan.max_order = max_order;
  plan.freq_cap = freq_cap;
  const int E = topo.num_edges();
  const int npair = (max_order + 1) * (max_order + 1);
  plan.nbasis.assign(npair, 0);
  plan.bval.resize(npair);
  plan.nself.assign(npair, 0);
  plan.sval.resize(npair);
  plan.edge_valid.resize(E);
  for (int e = 0; e < E; ++e)
    plan.edge_valid[e] = std::isnan(topo.theta[e]) ? 0 : 1;

  plan.rcos.resize(max_order);
  plan.rsin.resize(max_order);
  for (int n = 1; n <= max_order; ++n) {
    plan.rcos[n - 1].resize(E);
    plan.rsin[n - 1].resize(E);
    for (int e = 0; e < E; ++e) {
      plan.rcos[n - 1][e] = static_cast<T>(std::cos(n * topo.gamma[e]));
      plan.rsin[n - 1][e] = static_cast<T>(std::sin(n * topo.gamma[e]));
    }
  }

  for (int a = 0; a <= max_order; ++a)
    for (int b = 0; b <= max_order; ++b) {
      const int pair = a * (max_order + 1) + b;
      const IrrepType ia{a}, ib{b};
      const int da = ia.dim(), db = ib.dim();
      const auto& nbr =
          shared_neighbor_basis(ia, ib, std::min(freq_cap, a + b));
      const auto& self = shared_self_basis(ia, ib);
      plan.nbasis[pair] = nbr.dim();
      plan.nself[pair] = self.dim();
      // Neighbor basis, evaluated per edge, stored transposed (da x db).
      plan.bval[pair].assign(
          static_cast<std::size_t>(E) * nbr.dim() * da * db, T(0));
      for (int e = 0; e < E; ++e) {
        if (!plan.edge_valid[e]) continue;
        for (int k = 0; k < nbr.dim(); ++k) {
          const Eigen::MatrixXd K = nbr.elements[k].eval(topo.theta[e]);
          T* dst = plan.bval[pair].data() +
                   (static_cast<std::size_t>(e) * nbr.dim() + k) * da * db;
          for (int r = 0; r < da; ++r)
            for (int c = 0; c < db; ++c)
              dst[r * db + c] = static_cast<T>(K(c, r));
        }
      }
      // Self basis (transposed, da x db).
      plan.sval[pair].assign(static_cast<std::size_t>(self.dim()) * da * db,
                             T(0));
      for (int k = 0; k < self.dim(); ++k) {
        const Eigen::MatrixXd& B = self.elements[k];
        T* dst = plan.sval[pair].data() + static_cast<std::size_t>(k) * da * db;
        for (int r = 0; r < da; ++r)
          for (int c = 0; c < db; ++c) dst[r * db + c] = static_cast<T>(B(c, r));
      }
    }
  return plan;
}

// Coefficient layout of one GEM layer: per ordered segment pair, per basis
// element, a (mult_in x mult_out) block in row-major order. Shared between
// parameter counting, initialization and the convolution kernels.
struct GemCoeffLayout {
  struct PairSlice {
    int order_in, order_out;
    int mult_in, mult_out;
    int in_offset, out_offset;  // channel offsets
    int nbasis;                 // elements in this block
    std::int64_t coeff_offset;  // into the flat coefficient vector
  };
  std::vector<PairSlice> self_blocks;
  std::vector<PairSlice> neighbor_blocks;
  std::int64_t self_count = 0;
  std::int64_t neighbor_count = 0;
};

GemCoeffLayout gem_coeff_layout(const RepType& in, const RepType& out,
                                const LayerBasis& basis);

// Context shared by forward and pullback of one GEM convolution.
template <typename T>
struct GemConvCtx {
  const GemLevelPlan<T>* plan = nullptr;
  RepType in, out;
  GemCoeffLayout layout;
  int max_order = 2;
};

namespace ad {

// out_p = (1/|N(p)|) * sum_{q in N(p)} x_q    (all edges, NaN theta included)
template <typename T>
int neighbor_mean(Tape<T>& tape, int x, const LevelTopo& topo) {
  const MatX<T>& v = tape.value(x);
  if (v.rows() != topo.nv) throw ConfigError("neighbor_mean: vertex mismatch");
  MatX<T> out = MatX<T>::Zero(v.rows(), v.cols());
  for (int p = 0; p < topo.nv; ++p) {
    for (int k = topo.row_begin[p]; k < topo.row_begin[p + 1]; ++k)
      out.row(p) += v.row(topo.src[k]);
    out.row(p) *= static_cast<T>(topo.inv_deg[p]);
  }
  const int id = tape.next_id();
  const LevelTopo* tp = &topo;
  return tape.make(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    if (!t.requires_grad(x)) return;
    const MatX<T>& g = t.grad(id);
    MatX<T>& gx = t.grad(x);
    for (int p = 0; p < tp->nv; ++p) {
      const T s = static_cast<T>(tp->inv_deg[p]);
      for (int k = tp->row_begin[p]; k < tp->row_begin[p + 1]; ++k)
        gx.row(tp->src[k]) += g.row(p) * s;
    }
  });
}

// GraphSAGE-style isotropic convolution: x*K1 + neighbor_mean(x)*K2.
template <typename T>
int conv_isotropic(Tape<T>& tape, int x, int k1, int k2,
                   const LevelTopo& topo) {
  const int self_term = matmul(tape, x, k1);
  const int mean = neighbor_mean(tape, x, topo);
  const int msg = matmul(tape, mean, k2);
  return add(tape, self_term, msg);
}

// FeaSt attention aggregation:
//   a(p, q) = softmax_{q in N(p)} w . (x_q - x_p)
//   out_p   = (1/|N(p)|) sum_q a(p, q) x_q
template <typename T>
int attention_aggregate(Tape<T>& tape, int x, int w, const LevelTopo& topo) {
  const MatX<T>& v = tape.value(x);
  const MatX<T>& wv = tape.value(w);
  if (wv.cols() != 1 || wv.rows() != v.cols())
    throw ConfigError("attention_aggregate: w must be (channels x 1)");
  if (v.rows() != topo.nv)
    throw ConfigError("attention_aggregate: vertex mismatch");

  auto att = std::make_shared<std::vector<T>>(topo.src.size());
  MatX<T> out = MatX<T>::Zero(v.rows(), v.cols());
  for (int p = 0; p < topo.nv; ++p) {
    const int lo = topo.row_begin[p], hi = topo.row_begin[p + 1];
    if (lo == hi) continue;
    const T base = v.row(p).dot(wv.col(0));
    T mx = -std::numeric_limits<T>::infinity();
    for (int k = lo; k < hi; ++k) {
      const T l = v.row(topo.src[k]).dot(wv.col(0)) - base;
      (*att)[k] = l;
      mx = std::max(mx, l);
    }
    T z = T(0);
    for (int k = lo; k < hi; ++k) {
      (*att)[k] = std::exp((*att)[k] - mx);
      z += (*att)[k];
    }
    for (int k = lo; k < hi; ++k) {
      (*att)[k] /= z;
      out.row(p) += (*att)[k] * v.row(topo.src[k]);
    }
    out.row(p) *= static_cast<T>(topo.inv_deg[p]);
  }

  const int id = tape.next_id();
  const LevelTopo* tp = &topo;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w);
  return tape.make(std::move(out), rg, [=](Tape<T>& t) {
    const MatX<T>& g = t.grad(id);
    const MatX<T>& xv = t.value(x);
    const MatX<T>& wvv = t.value(w);
    MatX<T>* gx = t.requires_grad(x) ? &t.grad(x) : nullptr;
    MatX<T>* gw = t.requires_grad(w) ? &t.grad(w) : nullptr;
    std::vector<T> da(tp->src.size());
    for (int p = 0; p < tp->nv; ++p) {
      const int lo = tp->row_begin[p], hi = tp->row_begin[p + 1];
      if (lo == hi) continue;
      const T s = static_cast<T>(tp->inv_deg[p]);
      // d(attention weight) and the direct path into x_q.
      T dot = T(0);
      for (int k = lo; k < hi; ++k) {
        da[k] = s * g.row(p).dot(xv.row(tp->src[k]));
        dot += (*att)[k] * da[k];
        if (gx) gx->row(tp->src[k]) += (s * (*att)[k]) * g.row(p);
      }
      // Softmax pullback, then logits into w and x.
      for (int k = lo; k < hi; ++k) {
        const T dl = (*att)[k] * (da[k] - dot);
        if (dl == T(0)) continue;
        const int q = tp->src[k];
        if (gw) gw->noalias() += dl * (xv.row(q) - xv.row(p)).transpose();
        if (gx) {
          gx->row(q) += dl * wvv.transpose();
          gx->row(p) -= dl * wvv.transpose();
        }
      }
    }
  });
}

// FeaSt convolution: x*K1 + attention_aggregate(x, w)*K2.
template <typename T>
int conv_attention(Tape<T>& tape, int x, int k1, int k2, int w,
                   const LevelTopo& topo) {
  const int self_term = matmul(tape, x, k1);
  const int agg = attention_aggregate(tape, x, w, topo);
  const int msg = matmul(tape, agg, k2);
  return add(tape, self_term, msg);
}

namespace detail {

// One segment-pair accumulation out_dst += W_k^T (rot(F_src) B_k) over a
// range of items. For the neighbor term items are edges (src/dst arrays,
// per-edge basis: bstride = nb*da*db); for the self term items are vertices
// (src = dst = identity, shared basis: bstride = 0).
template <typename T>
void gem_pair_forward(const T* F, int fcols, const int* src, const int* dst,
                      int count, const char* valid, const T* bvals,
                      std::size_t bstride, int nb, int da, int db, const T* rc,
                      const T* rs, const T* W, int mi, int mj, int in_off,
                      int out_off, T* Out, int ocols, T* t, T* u) {
  for (int e = 0; e < count; ++e) {
    if (valid && !valid[e]) continue;
    const T* fin =
        F + static_cast<std::size_t>(src ? src[e] : e) * fcols + in_off;
    if (da == 2 && rc) {
      const T c = rc[e], s = rs[e];
      for (int m = 0; m < mi; ++m) {
        const T a = fin[2 * m], b = fin[2 * m + 1];
        t[2 * m] = a * c - b * s;
        t[2 * m + 1] = a * s + b * c;
      }
    } else {
      for (int m = 0; m < mi * da; ++m) t[m] = fin[m];
    }
    T* out =
        Out + static_cast<std::size_t>(dst ? dst[e] : e) * ocols + out_off;
    const T* Bv = bvals + bstride * static_cast<std::size_t>(e);
    for (int k = 0; k < nb; ++k) {
      const T* B = Bv + static_cast<std::size_t>(k) * da * db;
      for (int m = 0; m < mi; ++m) {
        for (int c = 0; c < db; ++c) {
          T acc = T(0);
          for (int r = 0; r < da; ++r) acc += t[m * da + r] * B[r * db + c];
          u[m * db + c] = acc;
        }
      }
      const T* Wk = W + static_cast<std::size_t>(k) * mi * mj;
      for (int m = 0; m < mi; ++m) {
        const T* wrow = Wk + static_cast<std::size_t>(m) * mj;
        const T* urow = u + static_cast<std::size_t>(m) * db;
        for (int j = 0; j < mj; ++j) {
          const T wmj = wrow[j];
          T* orow = out + static_cast<std::size_t>(j) * db;
          for (int c = 0; c < db; ++c) orow[c] += wmj * urow[c];
        }
      }
    }
  }
}

// Pullback of gem_pair_forward; accumulates into dF and dW.
template <typename T>
void gem_pair_backward(const T* F, int fcols, const int* src, const int* dst,
                       int count, const char* valid, const T* bvals,
                       std::size_t bstride, int nb, int da, int db,
                       const T* rc, const T* rs, const T* W, int mi, int mj,
                       int in_off, int out_off, const T* G, int gcols, T* dF,
                       T* dW, T* t, T* u, T* du, T* dt) {
  for (int e = 0; e < count; ++e) {
    if (valid && !valid[e]) continue;
    const int srow = src ? src[e] : e;
    const T* fin = F + static_cast<std::size_t>(srow) * fcols + in_off;
    if (da == 2 && rc) {
      const T c = rc[e], s = rs[e];
      for (int m = 0; m < mi; ++m) {
        const T a = fin[2 * m], b = fin[2 * m + 1];
        t[2 * m] = a * c - b * s;
        t[2 * m + 1] = a * s + b * c;
      }
    } else {
      for (int m = 0; m < mi * da; ++m) t[m] = fin[m];
    }
    const T* g =
        G + static_cast<std::size_t>(dst ? dst[e] : e) * gcols + out_off;
    for (int m = 0; m < mi * da; ++m) dt[m] = T(0);
    const T* Bv = bvals + bstride * static_cast<std::size_t>(e);
    for (int k = 0; k < nb; ++k) {
      const T* B = Bv + static_cast<std::size_t>(k) * da * db;
      const T* Wk = W + static_cast<std::size_t>(k) * mi * mj;
      T* dWk = dW + static_cast<std::size_t>(k) * mi * mj;
      for (int m = 0; m < mi; ++m) {
        for (int c = 0; c < db; ++c) {
          T acc = T(0);
          for (int r = 0; r < da; ++r) acc += t[m * da + r] * B[r * db + c];
          u[m * db + c] = acc;
        }
      }
      for (int m = 0; m < mi; ++m) {
        const T* urow = u + static_cast<std::size_t>(m) * db;
        T* durow = du + static_cast<std::size_t>(m) * db;
        const T* wrow = Wk + static_cast<std::size_t>(m) * mj;
        T* dwrow = dWk + static_cast<std::size_t>(m) * mj;
        for (int c = 0; c < db; ++c) durow[c] = T(0);
        for (int j = 0; j < mj; ++j) {
          const T* grow = g + static_cast<std::size_t>(j) * db;
          T dw = T(0);
          for (int c = 0; c < db; ++c) {
            dw += urow[c] * grow[c];
            durow[c] += wrow[j] * grow[c];
          }
          dwrow[j] += dw;
        }
        T* dtrow = dt + static_cast<std::size_t>(m) * da;
        for (int r = 0; r < da; ++r) {
          T acc = T(0);
          for (int c = 0; c < db; ++c) acc += durow[c] * B[r * db + c];
          dtrow[r] += acc;
        }
      }
    }
    T* df = dF + static_cast<std::size_t>(srow) * fcols + in_off;
    if (da == 2 && rc) {
      const T c = rc[e], s = rs[e];
      for (int m = 0; m < mi; ++m) {
        const T a = dt[2 * m], b = dt[2 * m + 1];
        df[2 * m] += a * c + b * s;
        df[2 * m + 1] += -a * s + b * c;
      }
    } else {
      for (int m = 0; m < mi * da; ++m) df[m] += dt[m];
    }
  }
}

}  // namespace detail

// Gauge-equivariant mesh convolution:
//   out_p = f_p K1 + sum_{q in N(p)} rho(gamma_pq) f_q K2(theta_pq)
// with K1 expanded from the self-kernel basis and K2 from the angular basis
// via the trainable coefficient vectors k1, k2 (column leaves).
template <typename T>
int conv_gem(Tape<T>& tape, int x, int k1, int k2,
             std::shared_ptr<const GemConvCtx<T>> ctx) {
  const MatX<T>& v = tape.value(x);
  const LevelTopo& topo = *ctx->plan->topo;
  if (v.rows() != topo.nv) throw ConfigError("conv_gem: vertex count mismatch");
  if (v.cols() != ctx->in.dim()) throw ConfigError("conv_gem: in rep mismatch");
  if (tape.value(k1).rows() != ctx->layout.self_count ||
      tape.value(k2).rows() != ctx->layout.neighbor_count)
    throw ConfigError("conv_gem: coefficient vector size mismatch");

  const int maxo = ctx->max_order;
  const auto& plan = *ctx->plan;
  MatX<T> out = MatX<T>::Zero(topo.nv, ctx->out.dim());
  const int fcols = static_cast<int>(v.cols());
  const int ocols = ctx->out.dim();
  const int E = topo.num_edges();

  std::vector<T> tbuf, ubuf;
  auto ensure = [&](int mi, int da, int db) {
    tbuf.resize(std::max<std::size_t>(tbuf.size(),
                                      static_cast<std::size_t>(mi) * da));
    ubuf.resize(std::max<std::size_t>(ubuf.size(),
                                      static_cast<std::size_t>(mi) * db));
  };
  for (const auto& blk : ctx->layout.self_blocks) {
    const int pair = blk.order_in * (maxo + 1) + blk.order_out;
    if (plan.nself[pair] == 0) continue;
    const int da = IrrepType{blk.order_in}.dim();
    const int db = IrrepType{blk.order_out}.dim();
    ensure(blk.mult_in, da, db);
    detail::gem_pair_forward<T>(
        v.data(), fcols, nullptr, nullptr, topo.nv, nullptr,
        plan.sval[pair].data(), 0, plan.nself[pair], da, db, nullptr, nullptr,
        tape.value(k1).data() + blk.coeff_offset, blk.mult_in, blk.mult_out,
        blk.in_offset, blk.out_offset, out.data(), ocols, tbuf.data(),
        ubuf.data());
  }
  for (const auto& blk : ctx->layout.neighbor_blocks) {
    const int pair = blk.order_in * (maxo + 1) + blk.order_out;
    if (plan.nbasis[pair] == 0) continue;
    const int da = IrrepType{blk.order_in}.dim();
    const int db = IrrepType{blk.order_out}.dim();
    ensure(blk.mult_in, da, db);
    const T* rc =
        blk.order_in >= 1 ? plan.rcos[blk.order_in - 1].data() : nullptr;
    const T* rs =
        blk.order_in >= 1 ? plan.rsin[blk.order_in - 1].data() : nullptr;
    detail::gem_pair_forward<T>(
        v.data(), fcols, topo.src.data(), topo.dst.data(), E,
        plan.edge_valid.data(), plan.bval[pair].data(),
        static_cast<std::size_t>(plan.nbasis[pair]) * da * db,
        plan.nbasis[pair], da, db, rc, rs,
        tape.value(k2).data() + blk.coeff_offset, blk.mult_in, blk.mult_out,
        blk.in_offset, blk.out_offset, out.data(), ocols, tbuf.data(),
        ubuf.data());
  }

  const int id = tape.next_id();
  const bool rg = tape.requires_grad(x) || tape.requires_grad(k1) ||
                  tape.requires_grad(k2);
  return tape.make(std::move(out), rg, [=](Tape<T>& t) {
    const MatX<T>& g = t.grad(id);
    const MatX<T>& xv = t.value(x);
    const LevelTopo& tp = *ctx->plan->topo;
    const auto& pl = *ctx->plan;

    MatX<T> scratch_x, scratch_k1, scratch_k2;
    if (!t.requires_grad(x)) scratch_x = MatX<T>::Zero(xv.rows(), xv.cols());
    if (!t.requires_grad(k1))
      scratch_k1 = MatX<T>::Zero(t.value(k1).rows(), 1);
    if (!t.requires_grad(k2))
      scratch_k2 = MatX<T>::Zero(t.value(k2).rows(), 1);
    MatX<T>& gx = t.requires_grad(x) ? t.grad(x) : scratch_x;
    MatX<T>& gk1 = t.requires_grad(k1) ? t.grad(k1) : scratch_k1;
    MatX<T>& gk2 = t.requires_grad(k2) ? t.grad(k2) : scratch_k2;

    std::vector<T> tb, ub, dub, dtb;
    const int mo = ctx->max_order;
    for (const auto& blk : ctx->layout.self_blocks) {
      const int pair = blk.order_in * (mo + 1) + blk.order_out;
      if (pl.nself[pair] == 0) continue;
      const int da = IrrepType{blk.order_in}.dim();
      const int db = IrrepType{blk.order_out}.dim();
      tb.resize(static_cast<std::size_t>(blk.mult_in) * da);
      ub.resize(static_cast<std::size_t>(blk.mult_in) * db);
      dub.resize(ub.size());
      dtb.resize(tb.size());
      detail::gem_pair_backward<T>(
          xv.data(), static_cast<int>(xv.cols()), nullptr, nullptr, tp.nv,
          nullptr, pl.sval[pair].data(), 0, pl.nself[pair], da, db, nullptr,
          nullptr, t.value(k1).data() + blk.coeff_offset, blk.mult_in,
          blk.mult_out, blk.in_offset, blk.out_offset, g.data(),
          static_cast<int>(g.cols()), gx.data(),
          gk1.data() + blk.coeff_offset, tb.data(), ub.data(), dub.data(),
          dtb.data());
    }
    for (const auto& blk : ctx->layout.neighbor_blocks) {
      const int pair = blk.order_in * (mo + 1) + blk.order_out;
      if (pl.nbasis[pair] == 0) continue;
      const int da = IrrepType{blk.order_in}.dim();
      const int db = IrrepType{blk.order_out}.dim();
      tb.resize(static_cast<std::size_t>(blk.mult_in) * da);
      ub.resize(static_cast<std::size_t>(blk.mult_in) * db);
      dub.resize(ub.size());
      dtb.resize(tb.size());
      const T* rc =
          blk.order_in >= 1 ? pl.rcos[blk.order_in - 1].data() : nullptr;
      const T* rs =
          blk.order_in >= 1 ? pl.rsin[blk.order_in - 1].data() : nullptr;
      detail::gem_pair_backward<T>(
          xv.data(), static_cast<int>(xv.cols()), tp.src.data(),
          tp.dst.data(), tp.num_edges(), pl.edge_valid.data(),
          pl.bval[pair].data(),
          static_cast<std::size_t>(pl.nbasis[pair]) * da * db,
          pl.nbasis[pair], da, db, rc, rs,
          t.value(k2).data() + blk.coeff_offset, blk.mult_in, blk.mult_out,
          blk.in_offset, blk.out_offset, g.data(), static_cast<int>(g.cols()),
          gx.data(), gk2.data() + blk.coeff_offset, tb.data(), ub.data(),
          dub.data(), dtb.data());
    }
  });
}

// Pointwise linear map expanded from self-kernel bases only (the
// gauge-equivariant analogue of a per-vertex dense layer).
template <typename T>
int gem_linear(Tape<T>& tape, int x, int k1,
               std::shared_ptr<const GemConvCtx<T>> ctx) {
  const MatX<T>& v = tape.value(x);
  if (v.cols() != ctx->in.dim())
    throw ConfigError("gem_linear: in rep mismatch");
  if (tape.value(k1).rows() != ctx->layout.self_count)
    throw ConfigError("gem_linear: coefficient vector size mismatch");
  const int maxo = ctx->max_order;
  const auto& plan = *ctx->plan;
  const int n = static_cast<int>(v.rows());
  MatX<T> out = MatX<T>::Zero(n, ctx->out.dim());
  std::vector<T> tb, ub;
  for (const auto& blk : ctx->layout.self_blocks) {
    const int pair = blk.order_in * (maxo + 1) + blk.order_out;
    if (plan.nself[pair] == 0) continue;
    const int da = IrrepType{blk.order_in}.dim();
    const int db = IrrepType{blk.order_out}.dim();
    tb.resize(static_cast<std::size_t>(blk.mult_in) * da);
    ub.resize(static_cast<std::size_t>(blk.mult_in) * db);
    detail::gem_pair_forward<T>(
        v.data(), static_cast<int>(v.cols()), nullptr, nullptr, n, nullptr,
        plan.sval[pair].data(), 0, plan.nself[pair], da, db, nullptr, nullptr,
        tape.value(k1).data() + blk.coeff_offset, blk.mult_in, blk.mult_out,
        blk.in_offset, blk.out_offset, out.data(),
        static_cast<int>(out.cols()), tb.data(), ub.data());
  }
  const int id = tape.next_id();
  const bool rg = tape.requires_grad(x) || tape.requires_grad(k1);
  return tape.make(std::move(out), rg, [=](Tape<T>& t) {
    const MatX<T>& g = t.grad(id);
    const MatX<T>& xv = t.value(x);
    const auto& pl = *ctx->plan;
    MatX<T> scratch_x, scratch_k1;
    if (!t.requires_grad(x)) scratch_x = MatX<T>::Zero(xv.rows(), xv.cols());
    if (!t.requires_grad(k1))
      scratch_k1 = MatX<T>::Zero(t.value(k1).rows(), 1);
    MatX<T>& gx = t.requires_grad(x) ? t.grad(x) : scratch_x;
    MatX<T>& gk1 = t.requires_grad(k1) ? t.grad(k1) : scratch_k1;
    std::vector<T> tb2, ub2, dub2, dtb2;
    for (const auto& blk : ctx->layout.self_blocks) {
      const int pair = blk.order_in * (ctx->max_order + 1) + blk.order_out;
      if (pl.nself[pair] == 0) continue;
      const int da = IrrepType{blk.order_in}.dim();
      const int db = IrrepType{blk.order_out}.dim();
      tb2.resize(static_cast<std::size_t>(blk.mult_in) * da);
      ub2.resize(static_cast<std::size_t>(blk.mult_in) * db);
      dub2.resize(ub2.size());
      dtb2.resize(tb2.size());
      detail::gem_pair_backward<T>(
          xv.data(), static_cast<int>(xv.cols()), nullptr, nullptr,
          static_cast<int>(xv.rows()), nullptr, pl.sval[pair].data(), 0,
          pl.nself[pair], da, db, nullptr, nullptr,
          t.value(k1).data() + blk.coeff_offset, blk.mult_in, blk.mult_out,
          blk.in_offset, blk.out_offset, g.data(), static_cast<int>(g.cols()),
          gx.data(), gk1.data() + blk.coeff_offset, tb2.data(), ub2.data(),
          dub2.data(), dtb2.data());
    }
  });
}

// Bundled regular nonlinearity for irrep features: synthesize each bundle
// (one channel of every order) on nsamples uniform angles, apply ReLU,
// project back. Exact for scalar-only reps; gauge-equivariance error decays
// with nsamples. Precondition: nsamples >= 2*max_frequency + 1.
template <typename T>
int regular_relu(Tape<T>& tape, int x, const RepType& rep, int nsamples) {
  const MatX<T>& v = tape.value(x);
  if (v.cols() != rep.dim()) throw ConfigError("regular_relu: rep mismatch");
  if (nsamples < 2 * rep.max_order() + 1)
    throw ConfigError("regular_relu: nsamples below 2*max_frequency + 1");

  // Bundle channels: k-th bundle takes the k-th multiplicity of each order.
  struct Slot {
    int order;
    int col;
  };
  auto bundles = std::make_shared<std::vector<std::vector<Slot>>>();
  {
    const int maxo = rep.max_order();
    std::vector<std::vector<int>> cols_per_order(maxo + 1);
    for (std::size_t s = 0; s < rep.segments.size(); ++s) {
      const auto& seg = rep.segments[s];
      const int off = rep.offset(static_cast<int>(s));
      const int d = IrrepType{seg.order}.dim();
      for (int m = 0; m < seg.mult; ++m)
        cols_per_order[seg.order].push_back(off + m * d);
    }
    std::size_t nb = 0;
    for (const auto& c : cols_per_order) nb = std::max(nb, c.size());
    bundles->resize(nb);
    for (int n = 0; n <= maxo; ++n)
      for (std::size_t k = 0; k < cols_per_order[n].size(); ++k)
        (*bundles)[k].push_back({n, cols_per_order[n][k]});
  }

  // Trig tables.
  const int maxo = rep.max_order();
  auto tab = std::make_shared<std::vector<T>>();
  tab->resize(static_cast<std::size_t>(nsamples) * (2 * maxo + 1));
  for (int j = 0; j < nsamples; ++j) {
    const double phi = kTwoPi * j / nsamples;
    T* row = tab->data() + static_cast<std::size_t>(j) * (2 * maxo + 1);
    row[0] = T(1);
    for (int n = 1; n <= maxo; ++n) {
      row[2 * n - 1] = static_cast<T>(std::cos(n * phi));
      row[2 * n] = static_cast<T>(std::sin(n * phi));
    }
  }

  const int n_rows = static_cast<int>(v.rows());
  MatX<T> out = v;  // channels not in any bundle pass through unchanged
  auto mask = std::make_shared<std::vector<char>>(
      static_cast<std::size_t>(n_rows) * bundles->size() * nsamples);
  std::vector<T> s(nsamples);
  for (int p = 0; p < n_rows; ++p) {
    const T* row = v.data() + static_cast<std::size_t>(p) * v.cols();
    T* orow = out.data() + static_cast<std::size_t>(p) * v.cols();
    for (std::size_t bi = 0; bi < bundles->size(); ++bi) {
      const auto& slots = (*bundles)[bi];
      for (int j = 0; j < nsamples; ++j) {
        const T* tr = tab->data() + static_cast<std::size_t>(j) * (2 * maxo + 1);
        T acc = T(0);
        for (const auto& sl : slots) {
          if (sl.order == 0)
            acc += row[sl.col];
          else
            acc += row[sl.col] * tr[2 * sl.order - 1] +
                   row[sl.col + 1] * tr[2 * sl.order];
        }
        const bool pos = acc > T(0);
        (*mask)[(static_cast<std::size_t>(p) * bundles->size() + bi) *
                    nsamples +
                j] = pos ? 1 : 0;
        s[j] = pos ? acc : T(0);
      }
      // Project back (truncated forward transform).
      for (const auto& sl : slots) {
        if (sl.order == 0) {
          T acc = T(0);
          for (int j = 0; j < nsamples; ++j) acc += s[j];
          orow[sl.col] = acc / static_cast<T>(nsamples);
        } else {
          T ca = T(0), sa = T(0);
          for (int j = 0; j < nsamples; ++j) {
            const T* tr =
                tab->data() + static_cast<std::size_t>(j) * (2 * maxo + 1);
            ca += s[j] * tr[2 * sl.order - 1];
            sa += s[j] * tr[2 * sl.order];
          }
          orow[sl.col] = T(2) * ca / static_cast<T>(nsamples);
          orow[sl.col + 1] = T(2) * sa / static_cast<T>(nsamples);
        }
      }
    }
  }

  const int id = tape.next_id();
  return tape.make(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    if (!t.requires_grad(x)) return;
    const MatX<T>& g = t.grad(id);
    MatX<T>& gx = t.grad(x);
    const int rows = static_cast<int>(g.rows());
    const int cols = static_cast<int>(g.cols());
    std::vector<char> in_bundle(cols, 0);
    for (const auto& slots : *bundles)
      for (const auto& sl : slots) {
        in_bundle[sl.col] = 1;
        if (sl.order > 0) in_bundle[sl.col + 1] = 1;
      }
    std::vector<T> ds(nsamples);
    for (int p = 0; p < rows; ++p) {
      const T* grow = g.data() + static_cast<std::size_t>(p) * cols;
      T* gxrow = gx.data() + static_cast<std::size_t>(p) * cols;
      for (int c = 0; c < cols; ++c)
        if (!in_bundle[c]) gxrow[c] += grow[c];
      for (std::size_t bi = 0; bi < bundles->size(); ++bi) {
        const auto& slots = (*bundles)[bi];
        const char* mk =
            mask->data() +
            (static_cast<std::size_t>(p) * bundles->size() + bi) * nsamples;
        // ds_j = synthesis^T of output grads, masked by the ReLU gate.
        for (int j = 0; j < nsamples; ++j) {
          if (!mk[j]) {
            ds[j] = T(0);
            continue;
          }
          const T* tr =
              tab->data() + static_cast<std::size_t>(j) * (2 * maxo + 1);
          T acc = T(0);
          for (const auto& sl : slots) {
            if (sl.order == 0)
              acc += grow[sl.col] / static_cast<T>(nsamples);
            else
              acc += T(2) / static_cast<T>(nsamples) *
                     (grow[sl.col] * tr[2 * sl.order - 1] +
                      grow[sl.col + 1] * tr[2 * sl.order]);
          }
          ds[j] = acc;
        }
        for (const auto& sl : slots) {
          if (sl.order == 0) {
            T acc = T(0);
            for (int j = 0; j < nsamples; ++j) acc += ds[j];
            gxrow[sl.col] += acc;
          } else {
            T ca = T(0), sa = T(0);
            for (int j = 0; j < nsamples; ++j) {
              const T* tr =
                  tab->data() + static_cast<std::size_t>(j) * (2 * maxo + 1);
              ca += ds[j] * tr[2 * sl.order - 1];
              sa += ds[j] * tr[2 * sl.order];
            }
            gxrow[sl.col] += ca;
            gxrow[sl.col + 1] += sa;
          }
        }
      }
    }
  });
}

}  // namespace ad
}  // namespace hemomesh
