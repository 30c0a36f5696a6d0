#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pointssl/augment.hpp"
#include "pointssl/model.hpp"
#include "pointssl/sequence.hpp"
#include "pointssl/tensor.hpp"

namespace pointssl {

enum class TargetStatsMode { CopyOnline, Ema };

struct TrainConfig {
  std::int64_t steps = 2000;  // K
  int batch = 16;             // N
  double base_lr = 0.2;
  int warmup_epochs = 10;
  double tau_start = 0.996;
  double trust_coeff = 1e-3;
  double weight_decay = 1.5e-6;
  double lars_momentum = 0.0;  // 0 disables the momentum buffer
  std::int64_t steps_per_epoch = 1;
  bool use_temporal = true;  // false: both views start from the same cloud
  TargetStatsMode bn_stats = TargetStatsMode::CopyOnline;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("train config: steps must be non-negative");
    if (batch < 2) throw std::invalid_argument("train config: batch must be at least 2");
    if (tau_start < 0.0 || tau_start > 1.0)
      throw std::invalid_argument("train config: tau_start must lie in [0, 1]");
    if (steps_per_epoch < 1) throw std::invalid_argument("train config: steps_per_epoch must be positive");
  }
};

// ---------------------------------------------------------------------------
// Loss: per row 2 - 2 * <p, t> / (|p| |t|), averaged over the batch. The
// target operand is detached, so gradients flow through `pred` only.

template <typename Scalar>
Tensor<Scalar> byol_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target_proj) {
  if (pred.rank() != 2 || target_proj.rank() != 2 || pred.shape() != target_proj.shape())
    throw std::invalid_argument("byol_loss: shapes disagree, " + shape_str(pred.shape()) + " vs " +
                                shape_str(target_proj.shape()));
  const Scalar rows = static_cast<Scalar>(pred.dim(0));
  Tensor<Scalar> pn = l2_normalize(pred);
  Tensor<Scalar> tn = l2_normalize(target_proj.detach());
  Tensor<Scalar> dots = sum(mul(pn, tn));
  return add_scalar(scale(dots, Scalar(-2) / rows), Scalar(2));
}

template <typename Scalar>
Tensor<Scalar> total_loss(const Tensor<Scalar>& u_pred, const Tensor<Scalar>& v_target,
                          const Tensor<Scalar>& v_pred, const Tensor<Scalar>& u_target) {
  return add(byol_loss(u_pred, v_target), byol_loss(v_pred, u_target));
}

// ---------------------------------------------------------------------------
// Schedules.

// tau = 1 - (1 - tau_start) * (cos(pi k / K) + 1) / 2
inline double tau_schedule(std::int64_t k, std::int64_t K, double tau_start) {
  if (k < 0 || k > K) throw std::invalid_argument("tau_schedule: step " + std::to_string(k) + " outside [0, K]");
  if (K == 0) return 1.0;
  const double c = (std::cos(M_PI * static_cast<double>(k) / static_cast<double>(K)) + 1.0) / 2.0;
  return 1.0 - (1.0 - tau_start) * c;
}

// Linear warm-up to base_lr over `warmup_steps`, then cosine decay to 0 at K.
inline double cosine_lr(std::int64_t k, std::int64_t K, double base_lr, std::int64_t warmup_steps) {
  if (k < 0 || k > K) throw std::invalid_argument("cosine_lr: step " + std::to_string(k) + " outside [0, K]");
  if (warmup_steps >= K) return K == 0 ? base_lr : base_lr * static_cast<double>(k) / static_cast<double>(K);
  if (k < warmup_steps) return base_lr * static_cast<double>(k) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(k - warmup_steps) / static_cast<double>(K - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// EMA target update: phi <- tau * phi + (1 - tau) * theta for weights and
// learnable BN parameters; running stats follow `stats_mode`.

template <typename Scalar>
void ema_update(DualNetState<Scalar>& state, double tau,
                TargetStatsMode stats_mode = TargetStatsMode::CopyOnline) {
  const Scalar t = static_cast<Scalar>(tau);
  auto blend = [&](auto& online, auto& target, const std::string& online_name) {
    std::vector<std::pair<Scalar*, Eigen::Index>> online_spans;
    std::vector<ParamKind> kinds;
    for_each_param(online, online_name, [&](const std::string&, ParamKind kind, Scalar* data, Eigen::Index n) {
      online_spans.push_back({data, n});
      kinds.push_back(kind);
    });
    std::size_t slot = 0;
    for_each_param(target, online_name, [&](const std::string& name, ParamKind kind, Scalar* data, Eigen::Index n) {
      auto [src, sn] = online_spans.at(slot);
      if (sn != n || kinds.at(slot) != kind)
        throw std::invalid_argument("ema_update: online/target shape mismatch at " + name);
      ++slot;
      if (kind == ParamKind::BnStat) {
        if (stats_mode == TargetStatsMode::CopyOnline) {
          for (Eigen::Index i = 0; i < n; ++i) data[i] = src[i];
        } else {
          for (Eigen::Index i = 0; i < n; ++i) data[i] = t * data[i] + (Scalar(1) - t) * src[i];
        }
      } else {
        for (Eigen::Index i = 0; i < n; ++i) data[i] = t * data[i] + (Scalar(1) - t) * src[i];
      }
    });
  };
  blend(state.online_encoder, state.target_encoder, "encoder");
  blend(state.online_projector, state.target_projector, "projector");
}

// ---------------------------------------------------------------------------
// LARS: per-parameter trust-ratio scaling with weight decay; biases and BN
// parameters take the plain SGD step without decay.

struct LarsConfig {
  double trust_coeff = 1e-3;
  double weight_decay = 1.5e-6;
  double momentum = 0.0;
};

template <typename Scalar>
void lars_update(Scalar* w, const VecX<Scalar>& grad, typename VecX<Scalar>::Scalar lr, const LarsConfig& cfg,
                 bool excluded, VecX<Scalar>* velocity, const std::string& name) {
  if (!grad.allFinite())
    throw std::runtime_error("lars_step: non-finite gradient for '" + name + "'; aborting step");
  Eigen::Map<VecX<Scalar>> weights(w, grad.size());
  VecX<Scalar> update;
  Scalar rate = lr;
  if (excluded) {
    update = grad;
  } else {
    update = grad + static_cast<Scalar>(cfg.weight_decay) * weights;
    const Scalar w_norm = weights.norm();
    const Scalar u_norm = update.norm();
    if (w_norm > Scalar(0) && u_norm > Scalar(0))
      rate = lr * static_cast<Scalar>(cfg.trust_coeff) * w_norm / u_norm;
  }
  if (cfg.momentum > 0.0 && velocity) {
    if (velocity->size() == 0) *velocity = VecX<Scalar>::Zero(grad.size());
    *velocity = static_cast<Scalar>(cfg.momentum) * (*velocity) + rate * update;
    weights -= *velocity;
  } else {
    weights -= rate * update;
  }
}

template <typename Scalar>
void lars_update(Scalar* w, const VecX<Scalar>& grad, typename VecX<Scalar>::Scalar lr, const LarsConfig& cfg,
                 bool excluded, const std::string& name) {
  lars_update(w, grad, lr, cfg, excluded, static_cast<VecX<Scalar>*>(nullptr), name);
}

// Applies LARS to every parameter bound during the online forward pass. A
// parameter bound more than once in a step (both symmetric branches reuse the
// same weights) accumulates gradients across all of its uses first.
template <typename Scalar>
void lars_step(ParamSet<Scalar>& params, Tape<Scalar>& tape, Scalar lr, const LarsConfig& cfg,
               std::vector<VecX<Scalar>>* velocities = nullptr) {
  std::vector<Scalar*> order;
  std::unordered_map<Scalar*, std::size_t> slot_of;
  std::vector<VecX<Scalar>> grads;
  std::vector<const BoundParam<Scalar>*> reps;
  for (auto& p : params) {
    const Tensor<Scalar> g = tape.grad(p.leaf);
    auto [it, inserted] = slot_of.try_emplace(p.dst, order.size());
    if (inserted) {
      order.push_back(p.dst);
      grads.push_back(g.data());
      reps.push_back(&p);
    } else {
      grads[it->second] += g.data();
    }
  }
  if (velocities && velocities->size() < order.size()) velocities->resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    lars_update(order[i], grads[i], lr, cfg, reps[i]->lars_excluded,
                velocities ? &(*velocities)[i] : nullptr, reps[i]->name);
  }
}

// ---------------------------------------------------------------------------
// One optimization step over a batch of already-augmented view pairs.

template <typename Scalar>
struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  double tau = 0.0;
};

template <typename Scalar>
StepResult<Scalar> train_step_views(DualNetState<Scalar>& state, const std::vector<PointCloud>& views_u,
                                    const std::vector<PointCloud>& views_v, std::int64_t k, const TrainConfig& cfg,
                                    std::vector<VecX<Scalar>>* velocities = nullptr) {
  cfg.validate();
  Tensor<Scalar> xu = clouds_to_batch<Scalar>(views_u);
  Tensor<Scalar> xv = clouds_to_batch<Scalar>(views_v);

  Tape<Scalar> tape;
  ParamSet<Scalar> bound;
  Tensor<Scalar> zu = project(state.online_projector, encode(xu, state.online_encoder, BnMode::Train, &tape, &bound),
                              BnMode::Train, &tape, &bound);
  Tensor<Scalar> pu = predict(state.predictor, zu, BnMode::Train, &tape, &bound);
  Tensor<Scalar> zv = project(state.online_projector, encode(xv, state.online_encoder, BnMode::Train, &tape, &bound),
                              BnMode::Train, &tape, &bound);
  Tensor<Scalar> pv = predict(state.predictor, zv, BnMode::Train, &tape, &bound);

  // Target branch runs outside the tape (stop-gradient).
  Tensor<Scalar> tu = project(state.target_projector, encode(xu, state.target_encoder, BnMode::Train), BnMode::Train);
  Tensor<Scalar> tv = project(state.target_projector, encode(xv, state.target_encoder, BnMode::Train), BnMode::Train);

  Tensor<Scalar> loss = total_loss(pu, tv, pv, tu);
  tape.backward(loss);

  const double lr = cosine_lr(k, cfg.steps, cfg.base_lr,
                              static_cast<std::int64_t>(cfg.warmup_epochs) * cfg.steps_per_epoch);
  LarsConfig lars{cfg.trust_coeff, cfg.weight_decay, cfg.lars_momentum};
  lars_step(bound, tape, static_cast<Scalar>(lr), lars, velocities);

  const double tau = tau_schedule(k, cfg.steps, cfg.tau_start);
  ema_update(state, tau, cfg.bn_stats);

  StepResult<Scalar> r;
  r.loss = static_cast<double>(loss.value());
  r.lr = lr;
  r.tau = tau;
  return r;
}

// Samples a batch of temporal pairs, augments both views, and runs one step.
// Stream layout per step: item i uses step_rng.child(i); within an item,
// child(0) samples the pair and child(1)/child(2) augment the two views.
template <typename Scalar>
StepResult<Scalar> train_step(DualNetState<Scalar>& state,
                              const std::function<CloudPair(RngStream&)>& pair_sampler, std::int64_t k,
                              const TrainConfig& cfg, const AugmentationConfig& aug, RngStream step_rng,
                              std::vector<VecX<Scalar>>* velocities = nullptr) {
  std::vector<PointCloud> views_u, views_v;
  views_u.reserve(static_cast<std::size_t>(cfg.batch));
  views_v.reserve(static_cast<std::size_t>(cfg.batch));
  for (int i = 0; i < cfg.batch; ++i) {
    RngStream item = step_rng.child(static_cast<std::uint64_t>(i));
    RngStream pair_rng = item.child(0);
    CloudPair pair = pair_sampler(pair_rng);
    RngStream au = item.child(1);
    RngStream av = item.child(2);
    views_u.push_back(apply_pipeline(pair.first, au, aug));
    views_v.push_back(apply_pipeline(pair.second, av, aug));
  }
  return train_step_views(state, views_u, views_v, k, cfg, velocities);
}

// ---------------------------------------------------------------------------
// Full training loop; returns the online encoder (the kept artifact).

template <typename Scalar>
struct TrainCallbacks {
  // step index, result of that step
  std::function<void(std::int64_t, const StepResult<Scalar>&)> on_step;
  // step index (1-based completion count), current online encoder
  std::function<void(std::int64_t, const EncoderParams<Scalar>&)> on_checkpoint;
  std::int64_t checkpoint_every = 0;  // 0: no periodic checkpoints
};

template <typename Scalar>
EncoderParams<Scalar> train(const std::function<CloudPair(RngStream&)>& pair_sampler, std::size_t dataset_size,
                            const TrainConfig& cfg, const ModelConfig& model_cfg, const AugmentationConfig& aug,
                            RngStream root, DualNetState<Scalar>* final_state = nullptr,
                            const TrainCallbacks<Scalar>* callbacks = nullptr) {
  cfg.validate();
  model_cfg.validate();
  aug.validate();
  if (dataset_size == 0) throw std::invalid_argument("train: dataset is empty");

  TrainConfig run_cfg = cfg;
  run_cfg.steps_per_epoch =
      static_cast<std::int64_t>((dataset_size + static_cast<std::size_t>(cfg.batch) - 1) /
                                static_cast<std::size_t>(cfg.batch));

  RngStream init_rng = root.child(0);
  RngStream train_rng = root.child(1);
  DualNetState<Scalar> state = init_dual_net<Scalar>(init_rng, model_cfg);
  std::vector<VecX<Scalar>> velocities;

  for (std::int64_t k = 0; k < run_cfg.steps; ++k) {
    const StepResult<Scalar> r =
        train_step(state, pair_sampler, k, run_cfg, aug, train_rng.child(static_cast<std::uint64_t>(k)),
                   &velocities);
    if (callbacks && callbacks->on_step) callbacks->on_step(k, r);
    if (callbacks && callbacks->on_checkpoint && callbacks->checkpoint_every > 0 &&
        (k + 1) % callbacks->checkpoint_every == 0)
      callbacks->on_checkpoint(k + 1, state.online_encoder);
  }
  if (final_state) *final_state = state;
  return state.online_encoder;
}

}  // namespace pointssl
