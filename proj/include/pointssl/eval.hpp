#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "pointssl/augment.hpp"
#include "pointssl/model.hpp"
#include "pointssl/rng.hpp"

namespace pointssl {

// Frozen global features with their category labels.
struct FeatureSet {
  Eigen::MatrixXd features;  // [M x d]
  std::vector<int> labels;   // values in [0, class_count)
  int class_count = 0;

  Eigen::Index count() const { return features.rows(); }
  Eigen::Index width() const { return features.cols(); }
  void validate() const;
};

// One-vs-rest linear classifier.
struct LinearModel {
  Eigen::MatrixXd weights;  // [classes x d]
  Eigen::VectorXd bias;     // [classes]
};

struct ProbeConfig {
  double l2_reg = 1e-3;
  int iterations = 2000;
  double lr = 0.1;  // halved at 50% and 75% of the iteration budget
};

// Downsamples each cloud to points_per_shape (per-cloud child streams of
// `rng`), optionally normalizes to the unit sphere, and encodes in eval mode.
template <typename Scalar>
FeatureSet extract_features(const EncoderParams<Scalar>& encoder, const std::vector<PointCloud>& clouds,
                            int points_per_shape, RngStream rng, bool normalize) {
  if (clouds.empty()) throw std::invalid_argument("extract_features: empty dataset");
  const int d = const_cast<EncoderParams<Scalar>&>(encoder).output_width();
  FeatureSet fs;
  fs.features.resize(static_cast<Eigen::Index>(clouds.size()), d);
  fs.labels.reserve(clouds.size());
  int max_label = -1;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    RngStream item = rng.child(i);
    PointCloud c = downsample(clouds[i], points_per_shape, item);
    if (normalize) c = normalize_unit_sphere(c);
    const Tensor<Scalar> feat = encode_eval(cloud_to_batch<Scalar>(c), encoder);
    for (int j = 0; j < d; ++j) fs.features(static_cast<Eigen::Index>(i), j) = static_cast<double>(feat.data()(j));
    fs.labels.push_back(clouds[i].label);
    max_label = std::max(max_label, clouds[i].label);
  }
  fs.class_count = max_label + 1;
  return fs;
}

// Gradient descent on L2-regularized one-vs-rest hinge loss; deterministic
// (zero initialization, full-batch updates).
LinearModel train_linear_probe(const FeatureSet& train, const ProbeConfig& cfg = {});

// Fraction of argmax-correct predictions; ties break toward the lowest class.
double evaluate(const LinearModel& model, const FeatureSet& test);

// round(fraction*M) uniform indices, patched so every class keeps at least
// one representative.
std::vector<int> semi_supervised_subset(const std::vector<int>& labels, int class_count, double fraction,
                                        RngStream& rng);

FeatureSet subset_features(const FeatureSet& fs, const std::vector<int>& indices);

// Text export, one row per sample: label then the feature values.
void export_embeddings(const FeatureSet& fs, const std::string& path);
FeatureSet import_embeddings(const std::string& path);

// ---------------------------------------------------------------------------
// Fine-tuning evaluation: the probe with an unfrozen encoder. A linear
// classification head on the global feature is trained jointly with the
// encoder by softmax cross-entropy; desk-scale only.

struct FineTuneConfig {
  int steps = 300;
  int batch = 16;
  double lr = 0.02;
  int points_per_cloud = 128;  // train-time downsampling
  bool normalize = true;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct FineTunedClassifier {
  EncoderParams<Scalar> encoder;
  LinearLayer<Scalar> head;
  int class_count = 0;
};

template <typename Scalar>
FineTunedClassifier<Scalar> fine_tune(const EncoderParams<Scalar>& encoder, const std::vector<PointCloud>& clouds,
                                      int class_count, const FineTuneConfig& cfg) {
  if (clouds.empty()) throw std::invalid_argument("fine_tune: empty dataset");
  for (const auto& c : clouds) {
    if (c.label < 0 || c.label >= class_count)
      throw std::invalid_argument("fine_tune: cloud label outside [0, class_count)");
  }
  FineTunedClassifier<Scalar> model;
  model.encoder = encoder;
  model.class_count = class_count;
  RngStream root(cfg.seed);
  RngStream init_rng = root.child(0);
  model.head = init_linear<Scalar>(init_rng, model.encoder.output_width(), class_count);

  RngStream step_root = root.child(1);
  for (int k = 0; k < cfg.steps; ++k) {
    RngStream step_rng = step_root.child(static_cast<std::uint64_t>(k));
    std::vector<PointCloud> batch;
    std::vector<int> labels;
    for (int i = 0; i < cfg.batch; ++i) {
      RngStream item = step_rng.child(static_cast<std::uint64_t>(i));
      const auto& cloud = clouds[item.next_below(clouds.size())];
      PointCloud sampled = downsample(cloud, cfg.points_per_cloud, item);
      if (cfg.normalize) sampled = normalize_unit_sphere(sampled);
      batch.push_back(std::move(sampled));
      labels.push_back(cloud.label);
    }
    Tape<Scalar> tape;
    ParamSet<Scalar> bound;
    Tensor<Scalar> feats = encode(clouds_to_batch<Scalar>(batch), model.encoder, BnMode::Train, &tape, &bound);
    Tensor<Scalar> w = detail::bind_matrix(&tape, &bound, model.head.weight, "head.weight");
    Tensor<Scalar> b = detail::bind_rowvec(&tape, &bound, model.head.bias, "head.bias");
    Tensor<Scalar> logits = add_rowvector(matmul(feats, w), b);
    Tensor<Scalar> loss = softmax_cross_entropy(logits, labels);
    tape.backward(loss);
    for (auto& p : bound) {
      const Tensor<Scalar> g = tape.grad(p.leaf);
      Eigen::Map<VecX<Scalar>> weights(p.dst, p.size);
      weights -= static_cast<Scalar>(cfg.lr) * g.data();
    }
  }
  return model;
}

template <typename Scalar>
double evaluate_fine_tuned(const FineTunedClassifier<Scalar>& model, const std::vector<PointCloud>& clouds,
                           int points_per_cloud, bool normalize, RngStream rng) {
  if (clouds.empty()) throw std::invalid_argument("evaluate_fine_tuned: empty dataset");
  Eigen::Index correct = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    RngStream item = rng.child(i);
    PointCloud sampled = downsample(clouds[i], points_per_cloud, item);
    if (normalize) sampled = normalize_unit_sphere(sampled);
    const Tensor<Scalar> feat = encode_eval(cloud_to_batch<Scalar>(sampled), model.encoder);
    const RowVec<Scalar> scores =
        (feat.mat() * model.head.weight).row(0) + model.head.bias;
    int best = 0;
    for (int c = 1; c < model.class_count; ++c)
      if (scores(c) > scores(best)) best = c;
    if (best == clouds[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(clouds.size());
}

}  // namespace pointssl
