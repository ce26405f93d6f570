#include "hemomesh/kernel_basis.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>

namespace hemomesh {

namespace {

// Orthonormal nullspace of A (columns), canonicalized so the result does not
// depend on SVD ordering: project unit coordinate vectors onto the nullspace
// and Gram-Schmidt them in index order, fixing signs.
Eigen::MatrixXd nullspace(const Eigen::MatrixXd& A) {
  if (A.rows() == 0 || A.cols() == 0)
    return Eigen::MatrixXd::Identity(A.cols(), A.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-8 * (sv.size() > 0 ? sv(0) : 1.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  const int null_dim = static_cast<int>(A.cols()) - rank;
  if (null_dim == 0) return Eigen::MatrixXd(A.cols(), 0);
  const Eigen::MatrixXd N = svd.matrixV().rightCols(null_dim);

  Eigen::MatrixXd basis(A.cols(), null_dim);
  int have = 0;
  for (int k = 0; k < A.cols() && have < null_dim; ++k) {
    // Projection of e_k onto the nullspace.
    Eigen::VectorXd v = N * N.row(k).transpose();
    for (int j = 0; j < have; ++j) v -= basis.col(j).dot(v) * basis.col(j);
    const double n = v.norm();
    if (n > 1e-6) {
      v /= n;
      // Sign convention: first significant entry positive.
      for (int i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-9) {
          if (v(i) < 0.0) v = -v;
          break;
        }
      }
      basis.col(have++) = v;
    }
  }
  if (have != null_dim)
    throw NumericError("kernel basis canonicalization failed");
  return basis;
}

}  // namespace

SelfKernelBasis solve_self_kernel(IrrepType in, IrrepType out,
                                  int gauge_samples) {
  if (gauge_samples < 8) gauge_samples = 8;
  const int di = in.dim();
  const int dout = out.dim();
  const int nunk = di * dout;

  // Rows: vec(rho_out(g) B - B rho_in(g)) = 0 for sampled g.
  Eigen::MatrixXd A(gauge_samples * nunk, nunk);
  A.setZero();
  for (int s = 0; s < gauge_samples; ++s) {
    const double g = kTwoPi * (s + 0.5) / gauge_samples;
    const Eigen::MatrixXd Ro = irrep_matrix(out.order, g);
    const Eigen::MatrixXd Ri = irrep_matrix(in.order, g);
    // Unknown x indexes B row-major: B(r, c) = x[r * di + c].
    for (int r = 0; r < dout; ++r)
      for (int c = 0; c < di; ++c) {
        const int row = s * nunk + r * di + c;
        for (int k = 0; k < dout; ++k) A(row, k * di + c) += Ro(r, k);
        for (int k = 0; k < di; ++k) A(row, r * di + k) -= Ri(k, c);
      }
  }

  const Eigen::MatrixXd N = nullspace(A);
  SelfKernelBasis basis;
  basis.in = in;
  basis.out = out;
  for (int j = 0; j < N.cols(); ++j) {
    Eigen::MatrixXd B(dout, di);
    for (int r = 0; r < dout; ++r)
      for (int c = 0; c < di; ++c) B(r, c) = N(r * di + c, j);
    basis.elements.push_back(B);
  }
  return basis;
}

AngularKernelBasis solve_neighbor_kernel(IrrepType in, IrrepType out,
                                         int freq_cap, int gauge_samples) {
  if (freq_cap < 0) throw ConfigError("frequency cap must be >= 0");
  if (gauge_samples < 8) gauge_samples = 8;
  const int di = in.dim();
  const int dout = out.dim();
  const int per_mat = di * dout;
  const int nunk = (2 * freq_cap + 1) * per_mat;
  const int theta_samples = 4 * (freq_cap + 1) + 3;

  // Unknown layout: [C0, C1, S1, C2, S2, ...] each row-major dout x di.
  auto coeff_index = [&](int which, int m, int r, int c) {
    // which: 0 = cos (m >= 0), 1 = sin (m >= 1)
    const int mat = m == 0 ? 0 : (2 * m - 1 + which);
    return mat * per_mat + r * di + c;
  };

  Eigen::MatrixXd A(gauge_samples * theta_samples * per_mat, nunk);
  A.setZero();
  int row0 = 0;
  for (int gs = 0; gs < gauge_samples; ++gs) {
    const double g = kTwoPi * (gs + 0.37) / gauge_samples;
    const Eigen::MatrixXd Ro = irrep_matrix(out.order, -g);
    const Eigen::MatrixXd Ri = irrep_matrix(in.order, g);
    for (int ts = 0; ts < theta_samples; ++ts) {
      const double theta = kTwoPi * (ts + 0.13) / theta_samples;
      // K(theta - g)(r, c) - [rho_out(-g) K(theta) rho_in(g)](r, c) = 0.
      for (int r = 0; r < dout; ++r)
        for (int c = 0; c < di; ++c) {
          const int row = row0 + r * di + c;
          for (int m = 0; m <= freq_cap; ++m) {
            A(row, coeff_index(0, m, r, c)) += std::cos(m * (theta - g));
            if (m >= 1)
              A(row, coeff_index(1, m, r, c)) += std::sin(m * (theta - g));
          }
          for (int k = 0; k < dout; ++k)
            for (int l = 0; l < di; ++l) {
              const double w = Ro(r, k) * Ri(l, c);
              for (int m = 0; m <= freq_cap; ++m) {
                A(row, coeff_index(0, m, k, l)) -= w * std::cos(m * theta);
                if (m >= 1)
                  A(row, coeff_index(1, m, k, l)) -= w * std::sin(m * theta);
              }
            }
        }
      row0 += per_mat;
    }
  }

  const Eigen::MatrixXd N = nullspace(A);
  AngularKernelBasis basis;
  basis.in = in;
  basis.out = out;
  basis.freq_cap = freq_cap;
  basis.capped = freq_cap < in.order + out.order;
  for (int j = 0; j < N.cols(); ++j) {
    AngularKernel k;
    k.C.assign(freq_cap + 1, Eigen::MatrixXd::Zero(dout, di));
    k.S.assign(freq_cap + 1, Eigen::MatrixXd::Zero(dout, di));
    for (int m = 0; m <= freq_cap; ++m)
      for (int r = 0; r < dout; ++r)
        for (int c = 0; c < di; ++c) {
          k.C[m](r, c) = N(coeff_index(0, m, r, c), j);
          if (m >= 1) k.S[m](r, c) = N(coeff_index(1, m, r, c), j);
        }
    basis.elements.push_back(std::move(k));
  }
  return basis;
}

namespace {

struct PairKey {
  int in_order, out_order, cap;
  bool operator<(const PairKey& o) const {
    if (in_order != o.in_order) return in_order < o.in_order;
    if (out_order != o.out_order) return out_order < o.out_order;
    return cap < o.cap;
  }
};

std::mutex cache_mutex;
std::map<PairKey, SelfKernelBasis> self_cache;
std::map<PairKey, AngularKernelBasis> neighbor_cache;

const SelfKernelBasis& cached_self(IrrepType in, IrrepType out) {
  std::lock_guard<std::mutex> lock(cache_mutex);
  const PairKey key{in.order, out.order, 0};
  auto it = self_cache.find(key);
  if (it == self_cache.end())
    it = self_cache.emplace(key, solve_self_kernel(in, out)).first;
  return it->second;
}

const AngularKernelBasis& cached_neighbor(IrrepType in, IrrepType out,
                                          int cap) {
  std::lock_guard<std::mutex> lock(cache_mutex);
  const PairKey key{in.order, out.order, cap};
  auto it = neighbor_cache.find(key);
  if (it == neighbor_cache.end())
    it = neighbor_cache.emplace(key, solve_neighbor_kernel(in, out, cap)).first;
  return it->second;
}

}  // namespace

const SelfKernelBasis& shared_self_basis(IrrepType in, IrrepType out) {
  return cached_self(in, out);
}

const AngularKernelBasis& shared_neighbor_basis(IrrepType in, IrrepType out,
                                                int freq_cap) {
  return cached_neighbor(in, out, freq_cap);
}

LayerBasis assemble_layer_basis(const RepType& in, const RepType& out,
                                int freq_cap) {
  LayerBasis lb;
  lb.in = in;
  lb.out = out;
  lb.freq_cap = freq_cap;
  const auto nin = in.segments.size();
  const auto nout = out.segments.size();
  lb.self_blocks.reserve(nin * nout);
  lb.neighbor_blocks.reserve(nin * nout);
  for (std::size_t i = 0; i < nin; ++i)
    for (std::size_t j = 0; j < nout; ++j) {
      const IrrepType a{in.segments[i].order};
      const IrrepType b{out.segments[j].order};
      // Per-pair cap: a.order + b.order suffices (the constraint couples no
      // higher frequencies); the layer-level cap only ever truncates below.
      const int cap = std::min(freq_cap, a.order + b.order);
      const auto& self = cached_self(a, b);
      const auto& nbr = cached_neighbor(a, b, cap);
      lb.self_blocks.push_back(self);
      lb.neighbor_blocks.push_back(nbr);
      const std::int64_t mm = static_cast<std::int64_t>(in.segments[i].mult) *
                              out.segments[j].mult;
      lb.self_coeff_count += mm * self.dim();
      lb.neighbor_coeff_count += mm * nbr.dim();
    }
  return lb;
}

}  // namespace hemomesh
