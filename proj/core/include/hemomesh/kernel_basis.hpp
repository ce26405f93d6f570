#pragma once

#include <Eigen/Core>
#include <vector>

#include "hemomesh/gauge.hpp"

namespace hemomesh {

// Basis of intertwiners B with rho_out(g) B = B rho_in(g) for all g.
// Matrices are dim_out x dim_in; orthonormal, deterministic ordering.
struct SelfKernelBasis {
  IrrepType in, out;
  std::vector<Eigen::MatrixXd> elements;
  int dim() const { return static_cast<int>(elements.size()); }
};

// Angular kernel in a truncated Fourier basis:
//   K(theta) = C[0] + sum_m cos(m theta) C[m] + sin(m theta) S[m].
struct AngularKernel {
  std::vector<Eigen::MatrixXd> C;  // index 0..freq_cap
  std::vector<Eigen::MatrixXd> S;  // index 1..freq_cap (S[0] unused)

  Eigen::MatrixXd eval(double theta) const {
    Eigen::MatrixXd k = C[0];
    for (std::size_t m = 1; m < C.size(); ++m)
      k += std::cos(m * theta) * C[m] + std::sin(m * theta) * S[m];
    return k;
  }
};

// Basis of solutions of the gauge kernel constraint
//   K(theta - g) = rho_out(-g) K(theta) rho_in(g)   for all g, theta.
struct AngularKernelBasis {
  IrrepType in, out;
  int freq_cap = 0;
  bool capped = false;  // cap below in.order + out.order may lose solutions
  std::vector<AngularKernel> elements;
  int dim() const { return static_cast<int>(elements.size()); }
};

SelfKernelBasis solve_self_kernel(IrrepType in, IrrepType out,
                                  int gauge_samples = 16);
AngularKernelBasis solve_neighbor_kernel(IrrepType in, IrrepType out,
                                         int freq_cap, int gauge_samples = 16);

// Block-structured bases for one layer between two rep types. Per ordered
// segment pair the irrep-level basis is shared; trainable coefficients are
// one (mult_in x mult_out) matrix per basis element.
struct LayerBasis {
  RepType in, out;
  int freq_cap = 0;
  // [segment_in * nseg_out + segment_out]
  std::vector<SelfKernelBasis> self_blocks;
  std::vector<AngularKernelBasis> neighbor_blocks;
  std::int64_t self_coeff_count = 0;
  std::int64_t neighbor_coeff_count = 0;
  std::int64_t coefficient_count() const {
    return self_coeff_count + neighbor_coeff_count;
  }
};

LayerBasis assemble_layer_basis(const RepType& in, const RepType& out,
                                int freq_cap);

// Process-wide caches: bases are solved once per irrep pair and reused by
// every layer and mesh plan.
const SelfKernelBasis& shared_self_basis(IrrepType in, IrrepType out);
const AngularKernelBasis& shared_neighbor_basis(IrrepType in, IrrepType out,
                                                int freq_cap);

}  // namespace hemomesh
