#pragma once

#include <utility>
#include <vector>

#include "pointssl/geometry.hpp"
#include "pointssl/rng.hpp"

namespace pointssl {

// A captured (or rendered) depth sequence: frames plus camera-to-world poses
// sharing one set of intrinsics.
struct DepthSequence {
  std::vector<DepthFrame> frames;
  std::vector<CameraPose> poses;
  CameraIntrinsics intrinsics;

  void validate() const;
};

struct SamplerConfig {
  int keyframe_stride = 100;
  int window_len = 3;       // keyframes per sliding window
  int synthetic_steps = 1;  // chained view-change transforms per synthetic view
  bool enhance_natural = true;
  TemporalConfig temporal;
};

// Keeps frames 0, stride, 2*stride, ... with their poses.
DepthSequence subsample_keyframes(const DepthSequence& seq, int stride);

using CloudPair = std::pair<PointCloud, PointCloud>;

// Picks a random window over an (already keyframed) sequence and two distinct
// frames within it; back-projects both and shifts both into a shared frame
// whose origin is the first sampled frame's camera center.
CloudPair sample_natural_pair(const DepthSequence& keyframed, RngStream& rng, const SamplerConfig& cfg);

// Two independent chains of sampled view-change transforms applied to the
// same source cloud.
CloudPair make_synthetic_pair(const PointCloud& cloud, RngStream& rng, const SamplerConfig& cfg);

// One extra sampled view-change transform per member (no-op when
// cfg.enhance_natural is false).
CloudPair enhance_pair(const CloudPair& pair, RngStream& rng, const SamplerConfig& cfg);

}  // namespace pointssl
