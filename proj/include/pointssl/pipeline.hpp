#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssl/augment.hpp"
#include "pointssl/config.hpp"
#include "pointssl/datagen.hpp"
#include "pointssl/eval.hpp"
#include "pointssl/model.hpp"
#include "pointssl/sequence.hpp"
#include "pointssl/train.hpp"

namespace pointssl {

// Fully resolved pretraining run: every key pinned to its final value.
struct TrainSetup {
  ConfigMap resolved;
  std::string echo;

  std::string dataset;  // toy | clouds | sequences
  std::string data_dir;
  ToyShapeConfig toy;
  ModelConfig model;
  TrainConfig train;
  AugmentationConfig aug;
  SamplerConfig sampler;
  bool use_f32 = false;
  std::uint64_t seed = 42;
  std::int64_t checkpoint_every = 0;
};

// Applies defaults, validates, and rejects unknown keys.
TrainSetup resolve_train_setup(const ConfigMap& cfg);

struct PretrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  double final_loss = 0.0;
};

// Runs the full loop and writes <out_dir>/metrics.log plus
// <out_dir>/checkpoint_final.ckpt (and periodic checkpoints when configured).
PretrainResult run_pretrain(const TrainSetup& setup, const std::string& out_dir);

// Convenience used by the CLI and the acceptance suite: extract features for
// both splits with child streams of `seed`, optionally keep only a
// semi-supervised fraction of the training split, fit the probe, evaluate.
struct ProbeOutcome {
  double accuracy = 0.0;
  FeatureSet train_features;
  FeatureSet test_features;
};

ProbeOutcome probe_encoder(const EncoderParams<double>& encoder, const std::vector<PointCloud>& train_clouds,
                           const std::vector<PointCloud>& test_clouds, int points_per_shape, bool normalize,
                           std::uint64_t seed, double fraction = 1.0);

// In-memory pair sampler for cloud datasets: uniform cloud choice, then either
// two chained view-change transforms (temporal on) or the cloud twice.
std::function<CloudPair(RngStream&)> make_cloud_pair_sampler(std::vector<PointCloud> clouds,
                                                             const SamplerConfig& sampler, bool use_temporal);

// Sampler over keyframed depth sequences: natural pair plus optional
// view-change enhancement.
std::function<CloudPair(RngStream&)> make_sequence_pair_sampler(std::vector<DepthSequence> keyframed,
                                                                const SamplerConfig& sampler);

}  // namespace pointssl
