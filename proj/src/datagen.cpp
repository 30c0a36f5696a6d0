#include "pointssl/datagen.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pointssl {

ShapeClass shape_class_from_name(const std::string& name) {
  if (name == "sphere") return ShapeClass::Sphere;
  if (name == "cube-surface") return ShapeClass::CubeSurface;
  if (name == "cylinder") return ShapeClass::Cylinder;
  if (name == "torus") return ShapeClass::Torus;
  if (name == "cone") return ShapeClass::Cone;
  if (name == "plane-with-noise") return ShapeClass::PlaneWithNoise;
  throw std::invalid_argument("unknown shape class '" + name + "'");
}

std::string shape_class_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::Sphere: return "sphere";
    case ShapeClass::CubeSurface: return "cube-surface";
    case ShapeClass::Cylinder: return "cylinder";
    case ShapeClass::Torus: return "torus";
    case ShapeClass::Cone: return "cone";
    case ShapeClass::PlaneWithNoise: return "plane-with-noise";
  }
  throw std::invalid_argument("unknown shape class");
}

void ToyShapeConfig::validate() const {
  if (classes.size() < 2) throw std::invalid_argument("toy shapes: need at least 2 classes");
  if (samples_per_class < 4) throw std::invalid_argument("toy shapes: samples_per_class must be at least 4");
  if (points_per_shape < 1) throw std::invalid_argument("toy shapes: points_per_shape must be positive");
  if (noise_sigma < 0.0) throw std::invalid_argument("toy shapes: noise_sigma must be non-negative");
  if (pose_translation_max < 0.0) throw std::invalid_argument("toy shapes: pose_translation_max must be non-negative");
}

Eigen::Matrix3d random_rotation(RngStream& rng) {
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q[i] = rng.gaussian();
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

namespace {

Eigen::Vector3d sample_surface_point(ShapeClass cls, RngStream& rng) {
  switch (cls) {
    case ShapeClass::Sphere: {
      // Uniform on the unit sphere: z uniform, azimuth uniform.
      const double z = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      return {r * std::cos(phi), r * std::sin(phi), z};
    }
    case ShapeClass::CubeSurface: {
      const double a = 0.8;  // half-extent
      const int face = rng.uniform_int(0, 6);
      const double u = rng.uniform(-a, a);
      const double v = rng.uniform(-a, a);
      const double s = (face % 2 == 0) ? a : -a;
      if (face / 2 == 0) return {s, u, v};
      if (face / 2 == 1) return {u, s, v};
      return {u, v, s};
    }
    case ShapeClass::Cylinder: {
      const double radius = 0.7, half_height = 1.0;
      const double lateral = 2.0 * M_PI * radius * (2.0 * half_height);
      const double caps = 2.0 * M_PI * radius * radius;
      if (rng.next_double() < lateral / (lateral + caps)) {
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        return {radius * std::cos(theta), radius * std::sin(theta), rng.uniform(-half_height, half_height)};
      }
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      const double r = radius * std::sqrt(rng.next_double());
      const double z = rng.bernoulli(0.5) ? half_height : -half_height;
      return {r * std::cos(theta), r * std::sin(theta), z};
    }
    case ShapeClass::Torus: {
      const double R = 0.8, r = 0.3;
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      // Minor angle by rejection, density proportional to R + r*cos(phi).
      double phi = 0.0;
      for (;;) {
        phi = rng.uniform(0.0, 2.0 * M_PI);
        if (rng.next_double() < (R + r * std::cos(phi)) / (R + r)) break;
      }
      const double ring = R + r * std::cos(phi);
      return {ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)};
    }
    case ShapeClass::Cone: {
      const double base_radius = 0.9, half_height = 0.9;
      const Eigen::Vector3d apex(0.0, 0.0, half_height);
      const double slant = std::sqrt(base_radius * base_radius + 4.0 * half_height * half_height);
      const double lateral = M_PI * base_radius * slant;
      const double base = M_PI * base_radius * base_radius;
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      if (rng.next_double() < lateral / (lateral + base)) {
        // Area-uniform along the slant: radial fraction sqrt(U).
        const double f = std::sqrt(rng.next_double());
        const Eigen::Vector3d rim(base_radius * std::cos(theta), base_radius * std::sin(theta), -half_height);
        return apex + f * (rim - apex);
      }
      const double r = base_radius * std::sqrt(rng.next_double());
      return {r * std::cos(theta), r * std::sin(theta), -half_height};
    }
    case ShapeClass::PlaneWithNoise: {
      return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0};
    }
  }
  throw std::invalid_argument("unknown shape class");
}

}  // namespace

std::vector<PointCloud> generate_toy_shapes(RngStream rng, const ToyShapeConfig& cfg) {
  cfg.validate();
  std::vector<PointCloud> out;
  out.reserve(cfg.classes.size() * static_cast<std::size_t>(cfg.samples_per_class));
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    for (int j = 0; j < cfg.samples_per_class; ++j) {
      RngStream shape_rng = rng.child(c * static_cast<std::size_t>(cfg.samples_per_class) + static_cast<std::size_t>(j));
      PointCloud cloud;
      cloud.label = static_cast<int>(c);
      cloud.points.resize(3, cfg.points_per_shape);
      for (int p = 0; p < cfg.points_per_shape; ++p) cloud.points.col(p) = sample_surface_point(cfg.classes[c], shape_rng);
      if (cfg.noise_sigma > 0.0) {
        for (int p = 0; p < cfg.points_per_shape; ++p)
          for (int a = 0; a < 3; ++a) cloud.points(a, p) += cfg.noise_sigma * shape_rng.gaussian();
      }
      const Eigen::Matrix3d rot = random_rotation(shape_rng);
      Eigen::Vector3d shift = Eigen::Vector3d::Zero();
      if (cfg.pose_translation_max > 0.0) {
        for (int a = 0; a < 3; ++a) shift[a] = shape_rng.uniform(-cfg.pose_translation_max, cfg.pose_translation_max);
      }
      cloud.points = (rot * cloud.points).colwise() + shift;
      out.push_back(std::move(cloud));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void DepthSceneConfig::validate() const {
  if (width < 8 || height < 8) throw std::invalid_argument("depth scene: image too small");
  if (frames < 2) throw std::invalid_argument("depth scene: needs at least 2 frames");
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("depth scene: focal lengths must be positive");
  if (min_primitives < 1 || max_primitives < min_primitives)
    throw std::invalid_argument("depth scene: bad primitive count range");
}

namespace {

struct SceneSphere {
  Eigen::Vector3d center;
  double radius;
};

// Catmull-Rom interpolation through four control points.
Eigen::Vector3d catmull_rom(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                            const Eigen::Vector3d& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();  // camera +z
  Eigen::Vector3d up(0.0, -1.0, 0.0);                           // image v grows downward
  Eigen::Vector3d right = up.cross(forward).normalized();
  up = forward.cross(right);
  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = up;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

}  // namespace

DepthSequence generate_depth_sequence(RngStream rng, const DepthSceneConfig& cfg) {
  cfg.validate();
  DepthSequence seq;
  seq.intrinsics.fx = cfg.fx;
  seq.intrinsics.fy = cfg.fy;
  seq.intrinsics.cx = (cfg.width - 1) / 2.0;
  seq.intrinsics.cy = (cfg.height - 1) / 2.0;
  seq.intrinsics.width = cfg.width;
  seq.intrinsics.height = cfg.height;

  RngStream scene_rng = rng.child(0);
  const int count = cfg.min_primitives + static_cast<int>(scene_rng.next_below(
                                             static_cast<std::uint64_t>(cfg.max_primitives - cfg.min_primitives + 1)));
  std::vector<SceneSphere> spheres;
  for (int i = 0; i < count; ++i) {
    SceneSphere s;
    for (int a = 0; a < 3; ++a) s.center[a] = scene_rng.uniform(-1.0, 1.0);
    s.radius = scene_rng.uniform(0.25, 0.6);
    spheres.push_back(s);
  }
  const double back_plane_z = -2.5;  // world plane z = back_plane_z, normal +z

  // Camera path: slow orbit segment at radius ~4 with mild bounded wobble,
  // interpolated through four seeded control points.
  RngStream path_rng = rng.child(1);
  const double radius = path_rng.uniform(3.5, 4.5);
  const double arc_start = path_rng.uniform(0.0, 2.0 * M_PI);
  const double arc_len = path_rng.uniform(0.5, 0.7);  // radians over the whole sequence
  std::array<Eigen::Vector3d, 4> ctrl;
  for (int i = 0; i < 4; ++i) {
    const double ang = arc_start + arc_len * (static_cast<double>(i) - 1.0);
    ctrl[static_cast<std::size_t>(i)] =
        Eigen::Vector3d(radius * std::cos(ang), 0.4 + 0.2 * path_rng.next_double(), radius * std::sin(ang));
  }
  const Eigen::Vector3d target(0.0, 0.0, 0.0);

  seq.frames.reserve(static_cast<std::size_t>(cfg.frames));
  seq.poses.reserve(static_cast<std::size_t>(cfg.frames));
  for (int f = 0; f < cfg.frames; ++f) {
    const double t = static_cast<double>(f) / static_cast<double>(cfg.frames - 1);
    const Eigen::Vector3d eye = catmull_rom(ctrl[0], ctrl[1], ctrl[2], ctrl[3], t);
    const CameraPose pose = look_at(eye, target);

    DepthFrame frame;
    frame.width = cfg.width;
    frame.height = cfg.height;
    frame.data.assign(static_cast<std::size_t>(cfg.width) * cfg.height, 0.0f);
    for (int v = 0; v < cfg.height; ++v) {
      for (int u = 0; u < cfg.width; ++u) {
        // Direction with unit camera-z so the ray parameter equals z-depth.
        const Eigen::Vector3d dir_cam((u - seq.intrinsics.cx) / cfg.fx, (v - seq.intrinsics.cy) / cfg.fy, 1.0);
        const Eigen::Vector3d dir = pose.rotation * dir_cam;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : spheres) {
          const Eigen::Vector3d oc = eye - s.center;
          const double a = dir.squaredNorm();
          const double b = 2.0 * oc.dot(dir);
          const double c = oc.squaredNorm() - s.radius * s.radius;
          const double disc = b * b - 4.0 * a * c;
          if (disc < 0.0) continue;
          const double sq = std::sqrt(disc);
          const double t0 = (-b - sq) / (2.0 * a);
          const double t1 = (-b + sq) / (2.0 * a);
          const double hit = t0 > 1e-6 ? t0 : (t1 > 1e-6 ? t1 : -1.0);
          if (hit > 0.0 && hit < best) best = hit;
        }
        if (std::abs(dir.z()) > 1e-12) {
          const double hit = (back_plane_z - eye.z()) / dir.z();
          if (hit > 1e-6 && hit < best) best = hit;
        }
        if (std::isfinite(best)) frame.at(u, v) = static_cast<float>(best);
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.poses.push_back(pose);
  }
  return seq;
}

}  // namespace pointssl
