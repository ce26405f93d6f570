#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hemomesh/metrics.hpp"
#include "hemomesh/unet.hpp"

namespace hemomesh {

// Adam with bias correction over the flat parameter vector.
template <typename T>
struct AdamState {
  std::int64_t step = 0;
  VecX<T> m, v;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init(std::int64_t n) {
    m = VecX<T>::Zero(n);
    v = VecX<T>::Zero(n);
    step = 0;
  }
};

// One optimizer step; aborts (NumericError) on non-finite gradients.
template <typename T>
void adam_step(VecX<T>& params, const VecX<T>& grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ConfigError("adam_step: size mismatch");
  for (Eigen::Index i = 0; i < grads.size(); ++i)
    if (!std::isfinite(static_cast<double>(grads(i))))
      throw NumericError("adam_step: non-finite gradient at coefficient " +
                         std::to_string(i) + " (step " +
                         std::to_string(state.step + 1) + ")");
  ++state.step;
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T lr = static_cast<T>(state.lr), eps = static_cast<T>(state.eps);
  const T c1 = T(1) - static_cast<T>(std::pow(state.beta1,
                                              static_cast<double>(state.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(state.beta2,
                                              static_cast<double>(state.step)));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    state.m(i) = b1 * state.m(i) + (T(1) - b1) * grads(i);
    state.v(i) = b2 * state.v(i) + (T(1) - b2) * grads(i) * grads(i);
    const T mhat = state.m(i) / c1;
    const T vhat = state.v(i) / c2;
    params(i) -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

struct TrainConfig {
  int epochs = 100;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool deterministic = true;
  double split_train = 0.8, split_val = 0.1, split_test = 0.1;
  bool cosine_decay = false;

  void validate() const {
    if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
      throw ConfigError("TrainConfig: split fractions must sum to 1");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_nmae = 0.0;  // percent
};

struct TrainResult {
  ModelParams<float> params;       // best-validation parameters
  ModelParams<float> final_params; // after the last epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_nmae = 0.0;
};

// A training view of one dataset sample: preprocessed bundle plus target.
struct TrainSample {
  SampleBundle<float> bundle;
  MatX<float> target;  // nv x 3 [Pa]
  std::string id;
};

// Mini driver: batch size one mesh, Adam, per-epoch validation NMAE, best
// checkpoint retained. Deterministic given (samples order, config, seed).
TrainResult train(const UNetModel& model,
                  const std::vector<const TrainSample*>& train_set,
                  const std::vector<const TrainSample*>& val_set,
                  const TrainConfig& cfg, std::uint64_t init_seed,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Forward + loss for one sample (no gradient); also used for validation.
double sample_loss(const UNetModel& model, const TrainSample& s,
                   const ModelParams<float>& params);

Field3 predict_sample(const UNetModel& model, const TrainSample& s,
                      const ModelParams<float>& params);

}  // namespace hemomesh
