#pragma once

#include <string>
#include <vector>

#include "pointssl/geometry.hpp"
#include "pointssl/rng.hpp"
#include "pointssl/sequence.hpp"

namespace pointssl {

enum class ShapeClass { Sphere, CubeSurface, Cylinder, Torus, Cone, PlaneWithNoise };

ShapeClass shape_class_from_name(const std::string& name);
std::string shape_class_name(ShapeClass c);

// Procedural labeled shapes: uniform surface samples of unit-scale primitives
// with Gaussian noise and a random per-shape pose (rotation always; translation
// bounded by pose_translation_max, 0 keeps shapes centered).
struct ToyShapeConfig {
  std::vector<ShapeClass> classes{ShapeClass::Sphere, ShapeClass::CubeSurface, ShapeClass::Cylinder,
                                  ShapeClass::Torus, ShapeClass::Cone};
  int samples_per_class = 100;
  int points_per_shape = 512;
  double noise_sigma = 0.02;
  double pose_translation_max = 0.0;

  void validate() const;
};

// Labels follow the order of cfg.classes. Shape (c, j) draws from
// rng.child(c * samples_per_class + j), so generation order never matters.
std::vector<PointCloud> generate_toy_shapes(RngStream rng, const ToyShapeConfig& cfg);

// Depth-rendered static scene (back plane plus a few spheres) observed from a
// smooth orbiting camera; poses come from a seeded spline, look-at oriented.
struct DepthSceneConfig {
  int width = 64;
  int height = 48;
  int frames = 220;
  double fx = 60.0;
  double fy = 60.0;
  int min_primitives = 3;
  int max_primitives = 6;

  void validate() const;
};

DepthSequence generate_depth_sequence(RngStream rng, const DepthSceneConfig& cfg);

// Uniformly random rotation (quaternion from four normal deviates, normalized).
Eigen::Matrix3d random_rotation(RngStream& rng);

}  // namespace pointssl
