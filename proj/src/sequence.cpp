#include "pointssl/sequence.hpp"

#include <stdexcept>
#include <string>

namespace pointssl {

void DepthSequence::validate() const {
  if (frames.size() != poses.size())
    throw std::invalid_argument("depth sequence: frame and pose counts differ (" + std::to_string(frames.size()) +
                                " vs " + std::to_string(poses.size()) + ")");
  if (frames.size() < 2) throw std::invalid_argument("depth sequence: needs at least 2 frames");
  for (const auto& f : frames) {
    if (f.width != intrinsics.width || f.height != intrinsics.height)
      throw std::invalid_argument("depth sequence: frame size does not match intrinsics");
  }
}

DepthSequence subsample_keyframes(const DepthSequence& seq, int stride) {
  if (stride < 1) throw std::invalid_argument("subsample_keyframes: stride must be at least 1");
  seq.validate();
  DepthSequence out;
  out.intrinsics = seq.intrinsics;
  for (std::size_t i = 0; i < seq.frames.size(); i += static_cast<std::size_t>(stride)) {
    out.frames.push_back(seq.frames[i]);
    out.poses.push_back(seq.poses[i]);
  }
  if (out.frames.size() < 2)
    throw std::invalid_argument("subsample_keyframes: stride " + std::to_string(stride) +
                                " leaves fewer than 2 keyframes");
  return out;
}

CloudPair sample_natural_pair(const DepthSequence& keyframed, RngStream& rng, const SamplerConfig& cfg) {
  keyframed.validate();
  const int n = static_cast<int>(keyframed.frames.size());
  if (cfg.window_len < 2) throw std::invalid_argument("sample_natural_pair: window_len must be at least 2");
  if (cfg.window_len > n)
    throw std::invalid_argument("sample_natural_pair: window_len " + std::to_string(cfg.window_len) +
                                " exceeds keyframe count " + std::to_string(n));
  const int start = rng.uniform_int(0, n - cfg.window_len + 1);
  const int first = start + rng.uniform_int(0, cfg.window_len);
  int second = start + rng.uniform_int(0, cfg.window_len - 1);
  if (second >= first) ++second;  // distinct by construction

  PointCloud u = backproject(keyframed.frames[static_cast<std::size_t>(first)], keyframed.intrinsics,
                             keyframed.poses[static_cast<std::size_t>(first)]);
  PointCloud v = backproject(keyframed.frames[static_cast<std::size_t>(second)], keyframed.intrinsics,
                             keyframed.poses[static_cast<std::size_t>(second)]);
  const Eigen::Vector3d origin = keyframed.poses[static_cast<std::size_t>(first)].translation;
  u.points.colwise() -= origin;
  v.points.colwise() -= origin;
  return {std::move(u), std::move(v)};
}

namespace {

PointCloud chain_transforms(const PointCloud& cloud, RngStream& rng, const SamplerConfig& cfg) {
  PointCloud out = cloud;
  for (int step = 0; step < cfg.synthetic_steps; ++step) {
    const Eigen::Vector3d ext = bounding_box(out).extents();
    out = apply_transform(out, sample_temporal_transform(rng, ext, cfg.temporal));
  }
  return out;
}

}  // namespace

CloudPair make_synthetic_pair(const PointCloud& cloud, RngStream& rng, const SamplerConfig& cfg) {
  cloud.validate();
  if (cfg.synthetic_steps < 1) throw std::invalid_argument("make_synthetic_pair: synthetic_steps must be at least 1");
  PointCloud u = chain_transforms(cloud, rng, cfg);
  PointCloud v = chain_transforms(cloud, rng, cfg);
  return {std::move(u), std::move(v)};
}

CloudPair enhance_pair(const CloudPair& pair, RngStream& rng, const SamplerConfig& cfg) {
  if (!cfg.enhance_natural) return pair;
  CloudPair out = pair;
  const Eigen::Vector3d ext_u = bounding_box(out.first).extents();
  out.first = apply_transform(out.first, sample_temporal_transform(rng, ext_u, cfg.temporal));
  const Eigen::Vector3d ext_v = bounding_box(out.second).extents();
  out.second = apply_transform(out.second, sample_temporal_transform(rng, ext_v, cfg.temporal));
  return out;
}

}  // namespace pointssl
