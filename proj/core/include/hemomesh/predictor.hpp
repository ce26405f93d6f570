#pragma once

#include <string>

#include "hemomesh/metrics.hpp"
#include "hemomesh/optimizer.hpp"
#include "hemomesh/unet.hpp"

namespace hemomesh {

// Checkpointed model plus the full preprocessing pipeline; predict() runs
// features, gauges, hierarchy and the forward pass on a fresh mesh.
class Predictor {
 public:
  explicit Predictor(Checkpoint ckpt);

  const UNetModel& model() const { return model_; }
  const Checkpoint& checkpoint() const { return ckpt_; }

  Field3 predict(const TriangleMesh& mesh) const;

  // Preprocessing + forward with the bundle reused (training/eval path).
  TrainSample make_sample(const TriangleMesh& mesh, const Field3& target,
                          const std::string& id) const;

 private:
  Checkpoint ckpt_;
  UNetModel model_;
};

}  // namespace hemomesh
