#pragma once

#include <memory>
#include <vector>

#include "hemomesh/conv.hpp"
#include "hemomesh/geodesy.hpp"

namespace hemomesh {

// One pooling transition V^{i} -> V^{i+1} (fine -> coarse, local indices).
struct PoolLevel {
  int n_fine = 0, n_coarse = 0;
  std::vector<int> assign;          // per fine vertex: coarse index
  std::vector<double> gamma;        // transport fine gauge -> center gauge
  std::vector<int> member_begin;    // CSR by coarse center
  std::vector<int> member;          // fine indices
};

// Nested vertex subsets with transports and per-level message-passing
// support. level_vertices[0] is the identity list; deeper levels are
// farthest-point subsets. Transports between a member and its center (and
// between adjacent centers) are composed edge-by-edge along geodesic
// shortest paths, so they stay well-defined on thin tubes where the direct
// normal-alignment rotation can degenerate.
struct PoolingHierarchy {
  std::vector<std::vector<int>> level_vertices;  // global vertex ids
  std::vector<LevelTopo> topo;                   // per level
  std::vector<PoolLevel> pools;                  // size = levels - 1
  int levels() const { return static_cast<int>(level_vertices.size()); }
};

// Builds the hierarchy for `ratios` coarsening levels; ratios are fractions
// of |V^0| (e.g. {1/4, 1/16, 1/64}), non-increasing. FPS starts at the
// vertex nearest the inlet when the mesh has one, else at a seeded vertex.
// Throws ConfigError when a level would drop below `min_level_size`.
PoolingHierarchy build_hierarchy(const TriangleMesh& mesh,
                                 const AdjacencyGraph& graph,
                                 const std::vector<TangentFrame>& frames,
                                 const std::vector<Vec3>& normals,
                                 const std::vector<double>& ratios,
                                 std::uint64_t seed, int min_level_size = 4);

namespace ad {

// Cluster mean; irrep segments are parallel-transported into the center
// gauge before averaging. rep == nullptr means plain Euclidean channels.
template <typename T>
int pool(Tape<T>& tape, int x, const PoolLevel& lvl, const RepType* rep) {
  const MatX<T>& v = tape.value(x);
  if (v.rows() != lvl.n_fine) throw ConfigError("pool: vertex count mismatch");
  const int cols = static_cast<int>(v.cols());
  MatX<T> out = MatX<T>::Zero(lvl.n_coarse, cols);
  auto rotate_row = [&](const T* fin, T* dst, double ang, int sign) {
    // Applies the per-segment irrep rotation of `rep` by sign*ang.
    int col = 0;
    for (const auto& seg : rep->segments) {
      const int d = IrrepType{seg.order}.dim();
      if (seg.order == 0) {
        for (int m = 0; m < seg.mult; ++m) dst[col + m] += fin[col + m];
      } else {
        const T c = static_cast<T>(std::cos(seg.order * ang));
        const T s = static_cast<T>(std::sin(seg.order * ang)) * sign;
        for (int m = 0; m < seg.mult; ++m) {
          const T a = fin[col + 2 * m], b = fin[col + 2 * m + 1];
          dst[col + 2 * m] += a * c - b * s;
          dst[col + 2 * m + 1] += a * s + b * c;
        }
      }
      col += seg.mult * d;
    }
  };

  for (int c = 0; c < lvl.n_coarse; ++c) {
    const int lo = lvl.member_begin[c], hi = lvl.member_begin[c + 1];
    T* dst = out.data() + static_cast<std::size_t>(c) * cols;
    for (int k = lo; k < hi; ++k) {
      const int m = lvl.member[k];
      const T* fin = v.data() + static_cast<std::size_t>(m) * cols;
      if (rep == nullptr) {
        for (int j = 0; j < cols; ++j) dst[j] += fin[j];
      } else {
        rotate_row(fin, dst, lvl.gamma[m], +1);
      }
    }
    const T inv = T(1) / static_cast<T>(hi - lo);
    for (int j = 0; j < cols; ++j) dst[j] *= inv;
  }

  const int id = tape.next_id();
  const PoolLevel* lp = &lvl;
  const bool euclid = rep == nullptr;
  const RepType repc = rep ? *rep : RepType{};
  return tape.make(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    if (!t.requires_grad(x)) return;
    const RepType* rep = euclid ? nullptr : &repc;
    const MatX<T>& g = t.grad(id);
    MatX<T>& gx = t.grad(x);
    const int ncols = static_cast<int>(g.cols());
    for (int c = 0; c < lp->n_coarse; ++c) {
      const int lo = lp->member_begin[c], hi = lp->member_begin[c + 1];
      const T inv = T(1) / static_cast<T>(hi - lo);
      const T* grow = g.data() + static_cast<std::size_t>(c) * ncols;
      std::vector<T> scaled(grow, grow + ncols);
      for (auto& sv : scaled) sv *= inv;
      for (int k = lo; k < hi; ++k) {
        const int m = lp->member[k];
        T* dst = gx.data() + static_cast<std::size_t>(m) * ncols;
        if (rep == nullptr) {
          for (int j = 0; j < ncols; ++j) dst[j] += scaled[j];
        } else {
          // Transpose of the rotation: rotate by -gamma.
          int col = 0;
          for (const auto& seg : rep->segments) {
            const int d = IrrepType{seg.order}.dim();
            if (seg.order == 0) {
              for (int mm = 0; mm < seg.mult; ++mm)
                dst[col + mm] += scaled[col + mm];
            } else {
              const T cc =
                  static_cast<T>(std::cos(seg.order * lp->gamma[m]));
              const T ss =
                  static_cast<T>(std::sin(seg.order * lp->gamma[m]));
              for (int mm = 0; mm < seg.mult; ++mm) {
                const T a = scaled[col + 2 * mm], b = scaled[col + 2 * mm + 1];
                dst[col + 2 * mm] += a * cc + b * ss;
                dst[col + 2 * mm + 1] += -a * ss + b * cc;
              }
            }
            col += seg.mult * d;
          }
        }
      }
    }
  });
}

// Each member receives its center's feature, transported into the member
// gauge (Euclidean: copied).
template <typename T>
int unpool(Tape<T>& tape, int x, const PoolLevel& lvl, const RepType* rep) {
  const MatX<T>& v = tape.value(x);
  if (v.rows() != lvl.n_coarse)
    throw ConfigError("unpool: vertex count mismatch");
  const int cols = static_cast<int>(v.cols());
  MatX<T> out = MatX<T>::Zero(lvl.n_fine, cols);
  for (int m = 0; m < lvl.n_fine; ++m) {
    const int c = lvl.assign[m];
    const T* fin = v.data() + static_cast<std::size_t>(c) * cols;
    T* dst = out.data() + static_cast<std::size_t>(m) * cols;
    if (rep == nullptr) {
      for (int j = 0; j < cols; ++j) dst[j] = fin[j];
    } else {
      int col = 0;
      for (const auto& seg : rep->segments) {
        const int d = IrrepType{seg.order}.dim();
        if (seg.order == 0) {
          for (int mm = 0; mm < seg.mult; ++mm) dst[col + mm] = fin[col + mm];
        } else {
          // Inverse of the member->center transport: rotate by -gamma.
          const T cc = static_cast<T>(std::cos(seg.order * lvl.gamma[m]));
          const T ss = static_cast<T>(std::sin(seg.order * lvl.gamma[m]));
          for (int mm = 0; mm < seg.mult; ++mm) {
            const T a = fin[col + 2 * mm], b = fin[col + 2 * mm + 1];
            dst[col + 2 * mm] = a * cc + b * ss;
            dst[col + 2 * mm + 1] = -a * ss + b * cc;
          }
        }
        col += seg.mult * d;
      }
    }
  }

  const int id = tape.next_id();
  const PoolLevel* lp = &lvl;
  const bool euclid = rep == nullptr;
  const RepType repc = rep ? *rep : RepType{};
  return tape.make(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    if (!t.requires_grad(x)) return;
    const RepType* rep = euclid ? nullptr : &repc;
    const MatX<T>& g = t.grad(id);
    MatX<T>& gx = t.grad(x);
    const int ncols = static_cast<int>(g.cols());
    for (int m = 0; m < lp->n_fine; ++m) {
      const int c = lp->assign[m];
      const T* grow = g.data() + static_cast<std::size_t>(m) * ncols;
      T* dst = gx.data() + static_cast<std::size_t>(c) * ncols;
      if (rep == nullptr) {
        for (int j = 0; j < ncols; ++j) dst[j] += grow[j];
      } else {
        int col = 0;
        for (const auto& seg : rep->segments) {
          const int d = IrrepType{seg.order}.dim();
          if (seg.order == 0) {
            for (int mm = 0; mm < seg.mult; ++mm)
              dst[col + mm] += grow[col + mm];
          } else {
            const T cc = static_cast<T>(std::cos(seg.order * lp->gamma[m]));
            const T ss = static_cast<T>(std::sin(seg.order * lp->gamma[m]));
            for (int mm = 0; mm < seg.mult; ++mm) {
              const T a = grow[col + 2 * mm], b = grow[col + 2 * mm + 1];
              dst[col + 2 * mm] += a * cc - b * ss;
              dst[col + 2 * mm + 1] += a * ss + b * cc;
            }
          }
          col += seg.mult * d;
        }
      }
    }
  });
}

}  // namespace ad
}  // namespace hemomesh
