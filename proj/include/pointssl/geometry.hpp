#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "pointssl/rng.hpp"

namespace pointssl {

// Ordered set of 3D points in meters, one column per point.
struct PointCloud {
  Eigen::Matrix3Xd points;
  int label = -1;

  Eigen::Index size() const { return points.cols(); }
  void validate() const;  // at least one point, all coordinates finite
};

// p -> scale * (rotation * p) + translation
struct RigidScaleTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;

  static RigidScaleTransform identity() { return {}; }
  void validate(double tol = 1e-9) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }
};

PointCloud apply_transform(const PointCloud& cloud, const RigidScaleTransform& t);

// compose(second, first) applies `first`, then `second`.
RigidScaleTransform compose(const RigidScaleTransform& second, const RigidScaleTransform& first);
RigidScaleTransform invert(const RigidScaleTransform& t);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  void validate() const;
};

// Camera-to-world map: world = rotation * cam + translation.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  void validate(double tol = 1e-9) const;
};

// Row-major depth image in meters; 0 marks an invalid pixel.
struct DepthFrame {
  int width = 0, height = 0;
  std::vector<float> data;  // data[v * width + u]

  float at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
};

// Pinhole back-projection of every valid pixel into world coordinates.
PointCloud backproject(const DepthFrame& depth, const CameraIntrinsics& intr, const CameraPose& pose);

// Forward pinhole map; returns (u, v, depth) in continuous pixel coordinates.
Eigen::Vector3d project_point(const Eigen::Vector3d& world, const CameraIntrinsics& intr, const CameraPose& pose);

// Centroid to origin, then uniform scale so the farthest point has norm 1.
// A cloud of identical points maps to the origin.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
  Eigen::Vector3d extents() const { return max - min; }
};

Aabb bounding_box(const PointCloud& cloud);

// View-change transform sampler. Each of the three parts (rotation,
// translation, scale) is included independently with `part_prob`, otherwise
// replaced by its identity.
struct TemporalConfig {
  double rotation_max_deg = 15.0;
  double translation_ratio = 0.1;  // fraction of the per-axis bounding-box extent
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  double part_prob = 0.5;
};

struct TemporalSample {
  bool rotate = false, translate = false, rescale = false;
  Eigen::Vector3d angles_deg = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation_ratios = Eigen::Vector3d::Zero();
  double scale = 1.0;
};

TemporalSample sample_temporal_params(RngStream& rng, const TemporalConfig& cfg);

// Materialize a sample against a cloud's bounding-box extents. Rotation is
// composed in X*Y*Z order.
RigidScaleTransform temporal_transform(const TemporalSample& s, const Eigen::Vector3d& extents);

RigidScaleTransform sample_temporal_transform(RngStream& rng, const Eigen::Vector3d& extents,
                                              const TemporalConfig& cfg);

}  // namespace pointssl
