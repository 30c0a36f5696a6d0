#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointssl/geometry.hpp"
#include "pointssl/rng.hpp"
#include "pointssl/tensor.hpp"

namespace pointssl {

struct ModelConfig {
  std::vector<int> encoder_widths{64, 128, 256};  // per-point MLP widths after the xyz input
  bool encoder_bn = true;
  int projector_hidden = 256;
  int projector_dim = 64;

  void validate() const {
    if (encoder_widths.empty()) throw std::invalid_argument("model config: encoder needs at least one layer");
    for (int w : encoder_widths)
      if (w < 1) throw std::invalid_argument("model config: encoder widths must be positive");
    if (projector_hidden < 1 || projector_dim < 1)
      throw std::invalid_argument("model config: head widths must be positive");
  }
};

template <typename Scalar>
struct LinearLayer {
  RowMat<Scalar> weight;  // [in x out]
  RowVec<Scalar> bias;    // [out]
};

// Shared per-point MLP (linear + optional BN + relu per layer) followed by a
// max pool over points.
template <typename Scalar>
struct EncoderParams {
  std::vector<LinearLayer<Scalar>> layers;
  std::vector<BnState<Scalar>> bn;
  bool use_bn = true;

  int input_width() const { return 3; }
  int output_width() const { return static_cast<int>(layers.back().weight.cols()); }
};

// Two-layer MLP head: linear + BN + relu, then linear.
template <typename Scalar>
struct HeadParams {
  LinearLayer<Scalar> hidden;
  BnState<Scalar> hidden_bn;
  LinearLayer<Scalar> output;

  int input_width() const { return static_cast<int>(hidden.weight.rows()); }
  int output_width() const { return static_cast<int>(output.weight.cols()); }
};

// Online branch (trained by gradients), target branch (tracked by EMA, never
// differentiated), and the predictor head.
template <typename Scalar>
struct DualNetState {
  EncoderParams<Scalar> online_encoder;
  HeadParams<Scalar> online_projector;
  EncoderParams<Scalar> target_encoder;
  HeadParams<Scalar> target_projector;
  HeadParams<Scalar> predictor;
};

// ---------------------------------------------------------------------------
// Initialization: weights uniform in (-sqrt(1/fan_in), +sqrt(1/fan_in)),
// biases zero, BN scale 1 / shift 0 / stats (0, 1).

template <typename Scalar>
LinearLayer<Scalar> init_linear(RngStream& rng, int fan_in, int fan_out) {
  LinearLayer<Scalar> l;
  const double bound = std::sqrt(1.0 / fan_in);
  l.weight.resize(fan_in, fan_out);
  for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
      l.weight(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
  l.bias = RowVec<Scalar>::Zero(fan_out);
  return l;
}

template <typename Scalar>
EncoderParams<Scalar> init_encoder(RngStream& rng, const ModelConfig& cfg) {
  cfg.validate();
  EncoderParams<Scalar> enc;
  enc.use_bn = cfg.encoder_bn;
  int in = 3;
  for (int out : cfg.encoder_widths) {
    enc.layers.push_back(init_linear<Scalar>(rng, in, out));
    enc.bn.push_back(BnState<Scalar>::init(out));
    in = out;
  }
  return enc;
}

template <typename Scalar>
HeadParams<Scalar> init_head(RngStream& rng, int in, int hidden, int out) {
  HeadParams<Scalar> h;
  h.hidden = init_linear<Scalar>(rng, in, hidden);
  h.hidden_bn = BnState<Scalar>::init(hidden);
  h.output = init_linear<Scalar>(rng, hidden, out);
  return h;
}

template <typename Scalar>
DualNetState<Scalar> init_dual_net(RngStream rng, const ModelConfig& cfg) {
  DualNetState<Scalar> s;
  s.online_encoder = init_encoder<Scalar>(rng, cfg);
  const int d = s.online_encoder.output_width();
  s.online_projector = init_head<Scalar>(rng, d, cfg.projector_hidden, cfg.projector_dim);
  s.predictor = init_head<Scalar>(rng, cfg.projector_dim, cfg.projector_hidden, cfg.projector_dim);
  s.target_encoder = s.online_encoder;
  s.target_projector = s.online_projector;
  return s;
}

// ---------------------------------------------------------------------------
// Parameter walking in declaration order. `stat` marks BN running statistics
// (tracked, not learned).

enum class ParamKind { Weight, Bias, BnScale, BnShift, BnStat };

template <typename Scalar, typename Fn>
void for_each_param(EncoderParams<Scalar>& enc, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    fn(base + ".weight", ParamKind::Weight, enc.layers[i].weight.data(), enc.layers[i].weight.size());
    fn(base + ".bias", ParamKind::Bias, enc.layers[i].bias.data(), enc.layers[i].bias.size());
    if (enc.use_bn) {
      auto& bn = enc.bn[i];
      fn(base + ".bn.gamma", ParamKind::BnScale, bn.gamma.data(), bn.gamma.size());
      fn(base + ".bn.beta", ParamKind::BnShift, bn.beta.data(), bn.beta.size());
      fn(base + ".bn.running_mean", ParamKind::BnStat, bn.running_mean.data(), bn.running_mean.size());
      fn(base + ".bn.running_var", ParamKind::BnStat, bn.running_var.data(), bn.running_var.size());
    }
  }
}

template <typename Scalar, typename Fn>
void for_each_param(HeadParams<Scalar>& head, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".hidden.weight", ParamKind::Weight, head.hidden.weight.data(), head.hidden.weight.size());
  fn(prefix + ".hidden.bias", ParamKind::Bias, head.hidden.bias.data(), head.hidden.bias.size());
  fn(prefix + ".bn.gamma", ParamKind::BnScale, head.hidden_bn.gamma.data(), head.hidden_bn.gamma.size());
  fn(prefix + ".bn.beta", ParamKind::BnShift, head.hidden_bn.beta.data(), head.hidden_bn.beta.size());
  fn(prefix + ".bn.running_mean", ParamKind::BnStat, head.hidden_bn.running_mean.data(),
     head.hidden_bn.running_mean.size());
  fn(prefix + ".bn.running_var", ParamKind::BnStat, head.hidden_bn.running_var.data(),
     head.hidden_bn.running_var.size());
  fn(prefix + ".output.weight", ParamKind::Weight, head.output.weight.data(), head.output.weight.size());
  fn(prefix + ".output.bias", ParamKind::Bias, head.output.bias.data(), head.output.bias.size());
}

// ---------------------------------------------------------------------------
// Forward passes. When `tape` is non-null, learnable parameters are bound as
// tape leaves and collected into `bound` for the optimizer; otherwise raw
// values act as constants (the stop-gradient path).

template <typename Scalar>
struct BoundParam {
  Tensor<Scalar> leaf;
  Scalar* dst;
  Eigen::Index size;
  bool lars_excluded;  // biases and BN parameters take the plain SGD step
  std::string name;
};

template <typename Scalar>
using ParamSet = std::vector<BoundParam<Scalar>>;

namespace detail {

template <typename Scalar>
Tensor<Scalar> bind_matrix(Tape<Scalar>* tape, ParamSet<Scalar>* bound, RowMat<Scalar>& m, const std::string& name) {
  if (!tape) return Tensor<Scalar>::from_matrix(m);
  Tensor<Scalar> leaf = tape->leaf_matrix(m);
  if (bound) bound->push_back({leaf, m.data(), m.size(), false, name});
  return leaf;
}

template <typename Scalar>
Tensor<Scalar> bind_rowvec(Tape<Scalar>* tape, ParamSet<Scalar>* bound, RowVec<Scalar>& v, const std::string& name) {
  if (!tape) return Tensor<Scalar>::from_rowvec(v);
  Tensor<Scalar> leaf = tape->leaf_rowvec(v);
  if (bound) bound->push_back({leaf, v.data(), v.size(), true, name});
  return leaf;
}

template <typename Scalar>
Tensor<Scalar> linear_bn_relu(const Tensor<Scalar>& x, LinearLayer<Scalar>& layer, BnState<Scalar>* bn, BnMode mode,
                              Tape<Scalar>* tape, ParamSet<Scalar>* bound, const std::string& name) {
  Tensor<Scalar> w = bind_matrix(tape, bound, layer.weight, name + ".weight");
  Tensor<Scalar> b = bind_rowvec(tape, bound, layer.bias, name + ".bias");
  Tensor<Scalar> h = add_rowvector(matmul(x, w), b);
  if (bn) {
    Tensor<Scalar> gamma = bind_rowvec(tape, bound, bn->gamma, name + ".bn.gamma");
    Tensor<Scalar> beta = bind_rowvec(tape, bound, bn->beta, name + ".bn.beta");
    h = (mode == BnMode::Train) ? batch_norm_train(h, gamma, beta, *bn) : batch_norm_eval(h, gamma, beta, *bn);
  }
  return relu(h);
}

}  // namespace detail

// Encodes a [B x N x 3] batch into [B x d] global features.
template <typename Scalar>
Tensor<Scalar> encode(const Tensor<Scalar>& batch, EncoderParams<Scalar>& params, BnMode mode,
                      Tape<Scalar>* tape = nullptr, ParamSet<Scalar>* bound = nullptr) {
  if (batch.rank() != 3 || batch.dim(2) != 3)
    throw std::invalid_argument("encode: expects a [B x N x 3] tensor, got " + shape_str(batch.shape()));
  const Eigen::Index B = batch.dim(0), N = batch.dim(1);
  Tensor<Scalar> h = reshape(batch, {B * N, 3});
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = detail::linear_bn_relu(h, params.layers[i], params.use_bn ? &params.bn[i] : nullptr, mode, tape, bound,
                               "layer" + std::to_string(i));
  }
  h = reshape(h, {B, N, h.dim(1)});
  return max_over_points(h);
}

// MLP head forward shared by project() and predict().
template <typename Scalar>
Tensor<Scalar> head_forward(const Tensor<Scalar>& z, HeadParams<Scalar>& params, BnMode mode,
                            Tape<Scalar>* tape = nullptr, ParamSet<Scalar>* bound = nullptr,
                            const std::string& name = "head") {
  if (z.rank() != 2 || z.dim(1) != params.input_width())
    throw std::invalid_argument("head: expects [B x " + std::to_string(params.input_width()) + "], got " +
                                shape_str(z.shape()));
  Tensor<Scalar> h = detail::linear_bn_relu(z, params.hidden, &params.hidden_bn, mode, tape, bound, name + ".hidden");
  Tensor<Scalar> w = detail::bind_matrix(tape, bound, params.output.weight, name + ".output.weight");
  Tensor<Scalar> b = detail::bind_rowvec(tape, bound, params.output.bias, name + ".output.bias");
  return add_rowvector(matmul(h, w), b);
}

template <typename Scalar>
Tensor<Scalar> project(HeadParams<Scalar>& head, const Tensor<Scalar>& z, BnMode mode, Tape<Scalar>* tape = nullptr,
                       ParamSet<Scalar>* bound = nullptr) {
  return head_forward(z, head, mode, tape, bound, "projector");
}

template <typename Scalar>
Tensor<Scalar> predict(HeadParams<Scalar>& head, const Tensor<Scalar>& z, BnMode mode, Tape<Scalar>* tape = nullptr,
                       ParamSet<Scalar>* bound = nullptr) {
  return head_forward(z, head, mode, tape, bound, "predictor");
}

// Pure eval-mode encoding; running statistics stay untouched in eval mode.
template <typename Scalar>
Tensor<Scalar> encode_eval(const Tensor<Scalar>& batch, const EncoderParams<Scalar>& params) {
  return encode(batch, const_cast<EncoderParams<Scalar>&>(params), BnMode::Eval);
}

// Packs point clouds into a [B x N x 3] tensor; every cloud must have N points.
template <typename Scalar>
Tensor<Scalar> clouds_to_batch(const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw std::invalid_argument("clouds_to_batch: empty batch");
  const Eigen::Index B = static_cast<Eigen::Index>(clouds.size());
  const Eigen::Index N = clouds.front().size();
  VecX<Scalar> data(B * N * 3);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& c = clouds[static_cast<std::size_t>(b)];
    if (c.size() != N) throw std::invalid_argument("clouds_to_batch: clouds have differing sizes");
    for (Eigen::Index n = 0; n < N; ++n)
      for (Eigen::Index a = 0; a < 3; ++a) data((b * N + n) * 3 + a) = static_cast<Scalar>(c.points(a, n));
  }
  return Tensor<Scalar>({B, N, 3}, std::move(data));
}

template <typename Scalar>
Tensor<Scalar> cloud_to_batch(const PointCloud& cloud) {
  return clouds_to_batch<Scalar>(std::vector<PointCloud>{cloud});
}

}  // namespace pointssl
