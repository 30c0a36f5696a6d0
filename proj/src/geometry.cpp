#include "pointssl/geometry.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace pointssl {

void PointCloud::validate() const {
  if (points.cols() < 1) throw std::invalid_argument("point cloud must contain at least one point");
  if (!points.allFinite()) throw std::invalid_argument("point cloud contains non-finite coordinates");
}

void RigidScaleTransform::validate(double tol) const {
  if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("transform rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > tol)
    throw std::invalid_argument("transform rotation is not proper (det != +1)");
  if (!(scale > 0.0)) throw std::invalid_argument("transform scale must be positive");
}

PointCloud apply_transform(const PointCloud& cloud, const RigidScaleTransform& t) {
  PointCloud out;
  out.label = cloud.label;
  out.points = (t.scale * (t.rotation * cloud.points)).colwise() + t.translation;
  return out;
}

RigidScaleTransform compose(const RigidScaleTransform& second, const RigidScaleTransform& first) {
  RigidScaleTransform c;
  c.rotation = second.rotation * first.rotation;
  c.scale = second.scale * first.scale;
  c.translation = second.scale * (second.rotation * first.translation) + second.translation;
  return c;
}

RigidScaleTransform invert(const RigidScaleTransform& t) {
  RigidScaleTransform inv;
  inv.rotation = t.rotation.transpose();
  inv.scale = 1.0 / t.scale;
  inv.translation = -inv.scale * (inv.rotation * t.translation);
  return inv;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image extents must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw std::invalid_argument("intrinsics: principal point lies outside the image");
}

void CameraPose::validate(double tol) const {
  if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("camera pose rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > tol)
    throw std::invalid_argument("camera pose rotation is not proper (det != +1)");
}

PointCloud backproject(const DepthFrame& depth, const CameraIntrinsics& intr, const CameraPose& pose) {
  intr.validate();
  if (depth.width != intr.width || depth.height != intr.height)
    throw std::invalid_argument("backproject: depth frame size does not match intrinsics");
  Eigen::Index valid = 0;
  for (float d : depth.data) {
    if (d < 0.0f) throw std::invalid_argument("backproject: negative depth value");
    if (d > 0.0f) ++valid;
  }
  if (valid == 0) throw std::invalid_argument("backproject: frame has no valid (positive) depth pixels");

  PointCloud out;
  out.points.resize(3, valid);
  Eigen::Index i = 0;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (d <= 0.0) continue;
      const Eigen::Vector3d cam((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
      out.points.col(i++) = pose.rotation * cam + pose.translation;
    }
  }
  return out;
}

Eigen::Vector3d project_point(const Eigen::Vector3d& world, const CameraIntrinsics& intr, const CameraPose& pose) {
  const Eigen::Vector3d cam = pose.rotation.transpose() * (world - pose.translation);
  if (!(cam.z() > 0.0)) throw std::invalid_argument("project_point: point is behind the camera");
  return {intr.fx * cam.x() / cam.z() + intr.cx, intr.fy * cam.y() / cam.z() + intr.cy, cam.z()};
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  cloud.validate();
  PointCloud out;
  out.label = cloud.label;
  const Eigen::Vector3d centroid = cloud.points.rowwise().mean();
  out.points = cloud.points.colwise() - centroid;
  const double max_norm = out.points.colwise().norm().maxCoeff();
  if (max_norm > 0.0) out.points /= max_norm;
  return out;
}

Aabb bounding_box(const PointCloud& cloud) {
  cloud.validate();
  Aabb box;
  box.min = cloud.points.rowwise().minCoeff();
  box.max = cloud.points.rowwise().maxCoeff();
  return box;
}

TemporalSample sample_temporal_params(RngStream& rng, const TemporalConfig& cfg) {
  TemporalSample s;
  s.rotate = rng.bernoulli(cfg.part_prob);
  if (s.rotate) {
    for (int a = 0; a < 3; ++a) s.angles_deg[a] = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  }
  s.translate = rng.bernoulli(cfg.part_prob);
  if (s.translate) {
    for (int a = 0; a < 3; ++a) s.translation_ratios[a] = rng.uniform(-cfg.translation_ratio, cfg.translation_ratio);
  }
  s.rescale = rng.bernoulli(cfg.part_prob);
  if (s.rescale) s.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  return s;
}

RigidScaleTransform temporal_transform(const TemporalSample& s, const Eigen::Vector3d& extents) {
  RigidScaleTransform t;
  if (s.rotate) {
    const double deg = M_PI / 180.0;
    t.rotation = (Eigen::AngleAxisd(s.angles_deg.x() * deg, Eigen::Vector3d::UnitX()) *
                  Eigen::AngleAxisd(s.angles_deg.y() * deg, Eigen::Vector3d::UnitY()) *
                  Eigen::AngleAxisd(s.angles_deg.z() * deg, Eigen::Vector3d::UnitZ()))
                     .toRotationMatrix();
  }
  if (s.translate) t.translation = s.translation_ratios.cwiseProduct(extents);
  if (s.rescale) t.scale = s.scale;
  return t;
}

RigidScaleTransform sample_temporal_transform(RngStream& rng, const Eigen::Vector3d& extents,
                                              const TemporalConfig& cfg) {
  return temporal_transform(sample_temporal_params(rng, cfg), extents);
}

}  // namespace pointssl
