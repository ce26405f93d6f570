#include "hemomesh/optimizer.hpp"

#include <cmath>
#include <limits>

namespace hemomesh {

namespace {

Field3 to_field(const MatX<float>& m) {
  Field3 f(m.rows());
  for (Eigen::Index v = 0; v < m.rows(); ++v)
    f[v] = Vec3(m(v, 0), m(v, 1), m(v, 2));
  return f;
}

}  // namespace

Field3 predict_sample(const UNetModel& model, const TrainSample& s,
                      const ModelParams<float>& params) {
  ad::Tape<float> tape;
  const int out = model.forward(tape, s.bundle, params, nullptr);
  return to_field(tape.value(out));
}

double sample_loss(const UNetModel& model, const TrainSample& s,
                   const ModelParams<float>& params) {
  ad::Tape<float> tape;
  const int out = model.forward(tape, s.bundle, params, nullptr);
  const int target = tape.constant(s.target);
  const int loss = ad::mse_loss(tape, out, target);
  return static_cast<double>(tape.value(loss)(0, 0));
}

TrainResult train(const UNetModel& model,
                  const std::vector<const TrainSample*>& train_set,
                  const std::vector<const TrainSample*>& val_set,
                  const TrainConfig& cfg, std::uint64_t init_seed,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: empty training split");

  ModelParams<float> params = model.init_params<float>(init_seed);
  VecX<float> flat = params.flatten();
  AdamState<float> adam;
  adam.lr = cfg.lr;
  adam.init(flat.size());

  Rng rng(cfg.seed);
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  auto validate_nmae = [&]() -> double {
    if (val_set.empty()) return 0.0;
    std::vector<Field3> preds, targets;
    for (const TrainSample* s : val_set) {
      preds.push_back(predict_sample(model, *s, params));
      targets.push_back(to_field(s->target));
    }
    return suite_metrics(preds, targets).nmae;
  };

  TrainResult result;
  result.best_val_nmae = std::numeric_limits<double>::max();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_decay)
      adam.lr = cfg.lr * 0.5 *
                (1.0 + std::cos(kPi * epoch / std::max(1, cfg.epochs - 1)));
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (int idx : order) {
      const TrainSample& s = *train_set[idx];
      ad::Tape<float> tape;
      std::vector<int> pnodes;
      const int out = model.forward(tape, s.bundle, params, &pnodes);
      const int target = tape.constant(s.target);
      const int loss = ad::mse_loss(tape, out, target);
      tape.backward(loss);
      loss_sum += static_cast<double>(tape.value(loss)(0, 0));

      // Collect flat gradient in block order.
      VecX<float> grad(flat.size());
      std::int64_t off = 0;
      for (std::size_t b = 0; b < pnodes.size(); ++b) {
        const auto n = params.blocks[b].size();
        if (tape.has_grad(pnodes[b])) {
          const MatX<float>& g = tape.grad(pnodes[b]);
          std::copy(g.data(), g.data() + n, grad.data() + off);
        } else {
          grad.segment(off, n).setZero();
        }
        off += n;
      }
      adam_step(flat, grad, adam);
      params.unflatten(flat);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.val_nmae = validate_nmae();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (val_set.empty() || rec.val_nmae < result.best_val_nmae) {
      result.best_val_nmae = rec.val_nmae;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  result.final_params = params;
  if (result.best_epoch < 0) result.params = params;  // epochs == 0
  return result;
}

}  // namespace hemomesh
