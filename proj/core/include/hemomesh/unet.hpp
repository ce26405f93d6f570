#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hemomesh/features.hpp"
#include "hemomesh/pooling.hpp"

namespace hemomesh {

enum class ConvVariant { isotropic, attention, gem };
enum class OutputMode { tangential, tangential_normal, euclidean3 };

std::string to_string(ConvVariant v);
ConvVariant variant_from_string(const std::string& s);

// Residual encoder-decoder over three pooling scales. The stem lifts input
// features pointwise at full resolution, message passing happens on the
// three pooled vertex subsets, and the head maps back to the output type
// after the last unpooling. widths are Euclidean channel counts; gem_mults
// are per-irrep multiplicities (rep = mult x {rho_0, rho_1, rho_2}).
struct UNetConfig {
  ConvVariant variant = ConvVariant::gem;
  std::array<int, 3> widths{58, 116, 232};
  std::array<int, 3> gem_mults{16, 32, 64};
  std::array<int, 3> blocks{2, 2, 2};          // encoder blocks per scale
  std::array<int, 2> decoder_blocks{2, 2};     // scales 1 and 2
  int frequency_cap = 2;
  int relu_samples = 6;
  OutputMode output_mode = OutputMode::tangential;
  std::array<double, 3> pool_ratios{0.25, 0.0625, 0.015625};
  FeatureRecipe recipe;

  static UNetConfig defaults(ConvVariant variant);
};

// Trainable parameters as named flat blocks plus a flat view; the flat
// round-trip is exact.
template <typename T>
struct ModelParams {
  std::vector<std::string> names;
  std::vector<VecX<T>> blocks;

  std::int64_t size() const {
    std::int64_t n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
  }
  VecX<T> flatten() const {
    VecX<T> flat(size());
    std::int64_t off = 0;
    for (const auto& b : blocks) {
      flat.segment(off, b.size()) = b;
      off += b.size();
    }
    return flat;
  }
  void unflatten(const VecX<T>& flat) {
    if (flat.size() != size())
      throw ConfigError("unflatten: flat vector size mismatch");
    std::int64_t off = 0;
    for (auto& b : blocks) {
      b = flat.segment(off, b.size());
      off += b.size();
    }
  }
  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.names = names;
    out.blocks.reserve(blocks.size());
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
    return out;
  }
};

// Everything precomputed per mesh that a forward pass needs. Topologies and
// plans reference the hierarchy, which must outlive any tape built on it.
template <typename T>
struct SampleBundle {
  std::shared_ptr<const PoolingHierarchy> hier;
  std::vector<GemLevelPlan<T>> plans;  // per level; empty unless gem
  MatX<T> inputs;                      // nv0 x c_in
  MatX<T> frame_basis;                 // nv0 x 9 (e1 | e2 | n), gem only
};

// One trainable layer in construction order.
struct LayerSpec {
  enum class Kind { linear, conv, proj };  // proj = pointwise skip adapter
  Kind kind = Kind::conv;
  int level = 0;   // topo index the layer runs on (pointwise: feature level)
  int cin = 0, cout = 0;
  RepType rin, rout;
  GemCoeffLayout layout;  // gem only
  std::string name;
  int p_k1 = -1, p_k2 = -1, p_w = -1;  // parameter block indices
};

class UNetModel {
 public:
  explicit UNetModel(const UNetConfig& cfg);

  const UNetConfig& config() const { return cfg_; }
  std::int64_t parameter_count() const { return parameter_count_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_dim() const;
  const RepType& input_rep() const { return rep_in_; }
  int max_order() const { return 2; }

  template <typename T>
  ModelParams<T> init_params(std::uint64_t seed) const;

  // Builds the whole network on the tape. param_nodes receives the leaf id
  // of every parameter block (same order as ModelParams.blocks). Returns
  // the id of the (nv0 x 3) output node.
  template <typename T>
  int forward(ad::Tape<T>& tape, const SampleBundle<T>& bundle,
              const ModelParams<T>& params,
              std::vector<int>* param_nodes = nullptr) const;

  // Prepares per-mesh state (hierarchy + plans + inputs) for this config.
  template <typename T>
  SampleBundle<T> make_bundle(const TriangleMesh& mesh,
                              const AdjacencyGraph& graph,
                              std::uint64_t hierarchy_seed = 0) const;

  // Forward-pass program, fixed at construction.
  struct Step {
    enum class Op {
      layer,       // arg = layer index
      nonlin,      // rep = operand rep (gem)
      save,        // push operand (residual skip)
      skip_add,    // arg = proj layer index or -1; pops saved operand
      enc_save,    // push operand (U-Net skip)
      concat_enc,  // arg = encoder slot
      pool,        // arg = pool level; rep = operand rep (gem)
      unpool,      // same
      project      // gem output projection
    };
    Op op;
    int arg = -1;
    RepType rep;
  };

  struct BlockShape {
    std::string name;
    int rows = 0, cols = 0;
    double init_std = 0.0;
  };

  const std::vector<Step>& program() const { return program_; }
  const std::vector<BlockShape>& shapes() const { return shapes_; }

 private:
  bool gem() const { return cfg_.variant == ConvVariant::gem; }
  RepType scale_rep(int scale) const {
    return RepType::uniform(cfg_.gem_mults[scale], 2);
  }
  RepType out_rep() const;
  int add_param(const std::string& name, int rows, int cols, double std);
  int add_pointwise(const std::string& name, int level, int cin, int cout,
                    const RepType& rin, const RepType& rout,
                    LayerSpec::Kind kind);
  int add_conv(const std::string& name, int level, int cin, int cout,
               const RepType& rin, const RepType& rout);
  void residual_block(const std::string& name, int level, int scale, int cin,
                      const RepType& rin);
  void build();

  UNetConfig cfg_;
  RepType rep_in_;
  std::vector<LayerSpec> layers_;
  std::vector<BlockShape> shapes_;
  std::vector<Step> program_;
  std::int64_t parameter_count_ = 0;
};

namespace ad {

// GEM output projection into world coordinates: rho_1 -> a e1 + b e2, plus
// s n when the rep carries a leading rho_0 (tangential+normal mode).
template <typename T>
int project_to_world(Tape<T>& tape, int x, const MatX<T>* frame_basis,
                     bool with_normal) {
  const MatX<T>& v = tape.value(x);
  const int nv = static_cast<int>(v.rows());
  const int expect = with_normal ? 3 : 2;
  if (v.cols() != expect)
    throw ConfigError("project_to_world: unexpected channel count");
  if (frame_basis->rows() != nv)
    throw ConfigError("project_to_world: frame table mismatch");
  MatX<T> out(nv, 3);
  const int a_col = with_normal ? 1 : 0;
  for (int p = 0; p < nv; ++p) {
    const T* fb = frame_basis->data() + static_cast<std::size_t>(p) * 9;
    const T a = v(p, a_col), b = v(p, a_col + 1);
    for (int d = 0; d < 3; ++d) out(p, d) = a * fb[d] + b * fb[3 + d];
    if (with_normal) {
      const T s = v(p, 0);
      for (int d = 0; d < 3; ++d) out(p, d) += s * fb[6 + d];
    }
  }
  const int id = tape.next_id();
  return tape.make(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    if (!t.requires_grad(x)) return;
    const MatX<T>& g = t.grad(id);
    MatX<T>& gx = t.grad(x);
    const int n = static_cast<int>(g.rows());
    for (int p = 0; p < n; ++p) {
      const T* fb = frame_basis->data() + static_cast<std::size_t>(p) * 9;
      T ga = T(0), gb = T(0), gs = T(0);
      for (int d = 0; d < 3; ++d) {
        ga += g(p, d) * fb[d];
        gb += g(p, d) * fb[3 + d];
        if (with_normal) gs += g(p, d) * fb[6 + d];
      }
      gx(p, a_col) += ga;
      gx(p, a_col + 1) += gb;
      if (with_normal) gx(p, 0) += gs;
    }
  });
}

}  // namespace ad

// Checkpoint file: magic + version header, JSON-encoded config, then the
// little-endian float32 flat parameter vector.
struct Checkpoint {
  UNetConfig config;
  std::uint64_t init_seed = 0;
  std::uint64_t hierarchy_seed = 0;
  std::string config_hash;
  ModelParams<float> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string config_json(const UNetConfig& cfg);
UNetConfig config_from_json(const std::string& text);

}  // namespace hemomesh

#include "hemomesh/unet_impl.hpp"
