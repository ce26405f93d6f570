#pragma once

// Template member definitions for UNetModel; included from unet.hpp.

namespace hemomesh {

template <typename T>
ModelParams<T> UNetModel::init_params(std::uint64_t seed) const {
  Rng rng(seed);
  ModelParams<T> params;
  params.names.reserve(shapes().size());
  params.blocks.reserve(shapes().size());
  for (const auto& s : shapes()) {
    VecX<T> b(static_cast<std::int64_t>(s.rows) * s.cols);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      b(i) = static_cast<T>(s.init_std == 0.0 ? 0.0
                                              : rng.normal(0.0, s.init_std));
    params.names.push_back(s.name);
    params.blocks.push_back(std::move(b));
  }
  return params;
}

template <typename T>
int UNetModel::forward(ad::Tape<T>& tape, const SampleBundle<T>& bundle,
                       const ModelParams<T>& params,
                       std::vector<int>* param_nodes) const {
  if (params.blocks.size() != shapes().size())
    throw ConfigError("forward: parameter block count mismatch");
  const PoolingHierarchy& hier = *bundle.hier;
  if (static_cast<int>(hier.pools.size()) != 3)
    throw ConfigError("forward: hierarchy must have three pooling levels");
  if (bundle.inputs.cols() != input_dim())
    throw ConfigError("forward: input feature width mismatch");

  // Push parameter leaves, shaped per block.
  std::vector<int> pnodes(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const auto& shape = shapes()[i];
    if (params.blocks[i].size() !=
        static_cast<std::int64_t>(shape.rows) * shape.cols)
      throw ConfigError("forward: parameter block '" + shape.name +
                        "' has wrong size");
    MatX<T> m(shape.rows, shape.cols);
    std::copy(params.blocks[i].data(),
              params.blocks[i].data() + params.blocks[i].size(), m.data());
    pnodes[i] = tape.leaf(std::move(m), true);
  }
  if (param_nodes) *param_nodes = pnodes;

  auto apply_layer = [&](const LayerSpec& L, int x) -> int {
    if (gem()) {
      auto ctx = std::make_shared<GemConvCtx<T>>();
      ctx->plan = &bundle.plans[L.level];
      ctx->in = L.rin;
      ctx->out = L.rout;
      ctx->layout = L.layout;
      ctx->max_order = max_order();
      if (L.kind == LayerSpec::Kind::conv)
        return ad::conv_gem<T>(tape, x, pnodes[L.p_k1], pnodes[L.p_k2], ctx);
      return ad::gem_linear<T>(tape, x, pnodes[L.p_k1], ctx);
    }
    if (L.kind == LayerSpec::Kind::conv) {
      const LevelTopo& topo = hier.topo[L.level];
      if (cfg_.variant == ConvVariant::attention)
        return ad::conv_attention<T>(tape, x, pnodes[L.p_k1], pnodes[L.p_k2],
                                     pnodes[L.p_w], topo);
      return ad::conv_isotropic<T>(tape, x, pnodes[L.p_k1], pnodes[L.p_k2],
                                   topo);
    }
    return ad::matmul<T>(tape, x, pnodes[L.p_k1]);
  };

  int x = tape.constant(bundle.inputs);
  std::vector<int> saved;
  std::vector<int> enc;
  for (const Step& step : program()) {
    switch (step.op) {
      case Step::Op::layer:
        x = apply_layer(layers_[step.arg], x);
        break;
      case Step::Op::nonlin:
        x = gem() ? ad::regular_relu<T>(tape, x, step.rep, cfg_.relu_samples)
                  : ad::relu<T>(tape, x);
        break;
      case Step::Op::save:
        saved.push_back(x);
        break;
      case Step::Op::skip_add: {
        int s = saved.back();
        saved.pop_back();
        if (step.arg >= 0) s = apply_layer(layers_[step.arg], s);
        x = ad::add<T>(tape, x, s);
        break;
      }
      case Step::Op::enc_save:
        enc.push_back(x);
        break;
      case Step::Op::concat_enc:
        x = ad::concat_cols<T>(tape, x, enc[step.arg]);
        break;
      case Step::Op::pool:
        x = ad::pool<T>(tape, x, hier.pools[step.arg],
                        gem() ? &step.rep : nullptr);
        break;
      case Step::Op::unpool:
        x = ad::unpool<T>(tape, x, hier.pools[step.arg],
                          gem() ? &step.rep : nullptr);
        break;
      case Step::Op::project:
        x = ad::project_to_world<T>(
            tape, x, &bundle.frame_basis,
            cfg_.output_mode == OutputMode::tangential_normal);
        break;
    }
  }
  return x;
}

template <typename T>
SampleBundle<T> UNetModel::make_bundle(const TriangleMesh& mesh,
                                       const AdjacencyGraph& graph,
                                       std::uint64_t hierarchy_seed) const {
  SampleBundle<T> bundle;
  const auto normals = vertex_normals(mesh);
  const auto frames = build_frames(mesh, graph, normals);

  DistanceField inlet;
  const DistanceField* inlet_ptr = nullptr;
  if (cfg_.recipe.include_inlet_distance) {
    inlet = inlet_distance_feature(mesh, graph);
    inlet_ptr = &inlet;
  }
  FeatureRecipe recipe = cfg_.recipe;
  recipe.form = gem() ? FeatureForm::irreps : FeatureForm::flattened;
  const Eigen::MatrixXd feats = build_inputs(
      mesh, graph, normals, gem() ? &frames : nullptr, inlet_ptr, recipe);
  bundle.inputs = feats.cast<T>();

  const std::vector<double> ratios(cfg_.pool_ratios.begin(),
                                   cfg_.pool_ratios.end());
  auto hier = std::make_shared<PoolingHierarchy>(build_hierarchy(
      mesh, graph, frames, normals, ratios, hierarchy_seed));
  bundle.hier = hier;

  if (gem()) {
    bundle.plans.resize(hier->topo.size());
    for (std::size_t lv = 0; lv < hier->topo.size(); ++lv)
      bundle.plans[lv] =
          build_gem_plan<T>(hier->topo[lv], max_order(), cfg_.frequency_cap);
    // Keep plan topo pointers valid: they reference hier, which the bundle
    // owns via shared_ptr.
    bundle.frame_basis.resize(mesh.num_vertices(), 9);
    for (int p = 0; p < mesh.num_vertices(); ++p)
      for (int d = 0; d < 3; ++d) {
        bundle.frame_basis(p, d) = static_cast<T>(frames[p].e1[d]);
        bundle.frame_basis(p, 3 + d) = static_cast<T>(frames[p].e2[d]);
        bundle.frame_basis(p, 6 + d) = static_cast<T>(frames[p].n[d]);
      }
  }
  return bundle;
}

}  // namespace hemomesh
