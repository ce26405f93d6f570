#include "hemomesh/predictor.hpp"

namespace hemomesh {

Predictor::Predictor(Checkpoint ckpt)
    : ckpt_(std::move(ckpt)), model_(ckpt_.config) {
  if (model_.parameter_count() != ckpt_.params.size())
    throw ConfigError("Predictor: checkpoint parameters do not fit config");
}

Field3 Predictor::predict(const TriangleMesh& mesh) const {
  const auto graph = build_adjacency(mesh);
  SampleBundle<float> bundle =
      model_.make_bundle<float>(mesh, graph, ckpt_.hierarchy_seed);
  ad::Tape<float> tape;
  const int out = model_.forward(tape, bundle, ckpt_.params, nullptr);
  const MatX<float>& m = tape.value(out);
  Field3 f(m.rows());
  for (Eigen::Index v = 0; v < m.rows(); ++v)
    f[v] = Vec3(m(v, 0), m(v, 1), m(v, 2));
  return f;
}

TrainSample Predictor::make_sample(const TriangleMesh& mesh,
                                   const Field3& target,
                                   const std::string& id) const {
  const auto graph = build_adjacency(mesh);
  TrainSample s;
  s.bundle = model_.make_bundle<float>(mesh, graph, ckpt_.hierarchy_seed);
  s.target.resize(static_cast<Eigen::Index>(target.size()), 3);
  for (std::size_t v = 0; v < target.size(); ++v)
    for (int d = 0; d < 3; ++d)
      s.target(static_cast<Eigen::Index>(v), d) =
          static_cast<float>(target[v][d]);
  s.id = id;
  return s;
}

}  // namespace hemomesh
