#pragma once

#include "pointssl/geometry.hpp"
#include "pointssl/rng.hpp"

namespace pointssl {

// Spatial augmentation pipeline configuration. Crop and cutout are
// probability-gated; jitter, dropout and downsampling always run.
struct AugmentationConfig {
  double crop_volume_lo = 0.6, crop_volume_hi = 1.0;
  double crop_aspect_lo = 0.75, crop_aspect_hi = 1.33;
  double cutout_dim_lo = 0.1, cutout_dim_hi = 0.4;
  double jitter_max = 0.05;
  double dropout_lo = 0.0, dropout_hi = 0.7;
  int target_points = 128;
  double crop_prob = 0.5;
  double cutout_prob = 0.5;
  bool normalize = true;
  int min_surviving_points = 16;

  void validate() const;
};

// Keeps the points inside a random axis-aligned cuboid whose relative volume
// is drawn from crop_volume range and whose edge-fraction ratios stay inside
// the aspect range. Falls back to the original cloud when too few points
// survive after 10 attempts.
PointCloud random_crop(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg);

// Removes the points strictly inside a random cuboid sized per-axis from the
// cutout_dim range; same fallback rule as random_crop.
PointCloud random_cutout(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg);

// Independent per-point, per-axis offsets uniform in [-jitter_max, jitter_max].
PointCloud random_jitter(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg);

// Removes round(r*N) uniformly chosen points, r ~ U[dropout range], never
// dropping below min_surviving_points. Survivor order is preserved.
PointCloud random_dropout(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg);

// Exactly n output points: a uniform sample without replacement when the
// cloud is large enough, otherwise all points plus uniform repeats.
PointCloud downsample(const PointCloud& cloud, int n, RngStream& rng);

// crop -> cutout -> jitter -> dropout -> downsample -> optional unit-sphere
// normalization. Output always has exactly cfg.target_points points.
PointCloud apply_pipeline(const PointCloud& cloud, RngStream& rng, const AugmentationConfig& cfg);

}  // namespace pointssl
