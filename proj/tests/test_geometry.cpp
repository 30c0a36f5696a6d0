#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "pointssl/datagen.hpp"
#include "pointssl/geometry.hpp"
#include "pointssl/rng.hpp"

using namespace pointssl;

namespace {

PointCloud make_cloud(std::initializer_list<Eigen::Vector3d> pts) {
  PointCloud c;
  c.points.resize(3, static_cast<Eigen::Index>(pts.size()));
  Eigen::Index i = 0;
  for (const auto& p : pts) c.points.col(i++) = p;
  return c;
}

RigidScaleTransform random_transform(RngStream& rng) {
  RigidScaleTransform t;
  t.rotation = random_rotation(rng);
  for (int a = 0; a < 3; ++a) t.translation[a] = rng.uniform(-2, 2);
  t.scale = rng.uniform(0.5, 2.0);
  return t;
}

PointCloud random_cloud(RngStream& rng, int n) {
  PointCloud c;
  c.points.resize(3, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) c.points(a, i) = rng.uniform(-1, 1);
  return c;
}

}  // namespace

TEST_CASE("apply_transform identity, rotation, and scaling") {
  const PointCloud c = make_cloud({{1, 0, 0}});
  const PointCloud same = apply_transform(c, RigidScaleTransform::identity());
  CHECK(same.points.col(0).isApprox(Eigen::Vector3d(1, 0, 0)));

  RigidScaleTransform rot90;
  rot90.rotation = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const PointCloud rotated = apply_transform(c, rot90);
  CHECK((rotated.points.col(0) - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);

  RigidScaleTransform scaled;
  scaled.scale = 2.0;
  const PointCloud doubled = apply_transform(make_cloud({{1, 1, 1}}), scaled);
  CHECK((doubled.points.col(0) - Eigen::Vector3d(2, 2, 2)).norm() < 1e-12);
}

TEST_CASE("apply_transform preserves count, order, and label") {
  RngStream rng(3);
  PointCloud c = random_cloud(rng, 20);
  c.label = 4;
  const RigidScaleTransform t = random_transform(rng);
  const PointCloud out = apply_transform(c, t);
  REQUIRE(out.size() == c.size());
  CHECK(out.label == 4);
  for (Eigen::Index i = 0; i < c.size(); ++i)
    CHECK((out.points.col(i) - t.apply(c.points.col(i))).norm() < 1e-12);
}

TEST_CASE("invert: identity, pure translation, and random round trip") {
  const RigidScaleTransform id_inv = invert(RigidScaleTransform::identity());
  CHECK(id_inv.rotation.isApprox(Eigen::Matrix3d::Identity()));
  CHECK(id_inv.translation.norm() == 0.0);
  CHECK(id_inv.scale == 1.0);

  RigidScaleTransform shift;
  shift.translation = Eigen::Vector3d(1, 2, 3);
  const RigidScaleTransform unshift = invert(shift);
  CHECK((unshift.translation - Eigen::Vector3d(-1, -2, -3)).norm() < 1e-12);

  RngStream rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidScaleTransform t = random_transform(rng);
    t.validate();
    const PointCloud c = random_cloud(rng, 10);
    const PointCloud round = apply_transform(apply_transform(c, t), invert(t));
    CHECK((round.points - c.points).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("composition matches sequential application") {
  RngStream rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidScaleTransform t1 = random_transform(rng);
    const RigidScaleTransform t2 = random_transform(rng);
    const PointCloud c = random_cloud(rng, 8);
    const PointCloud seq = apply_transform(apply_transform(c, t1), t2);
    const PointCloud once = apply_transform(c, compose(t2, t1));
    CHECK((seq.points - once.points).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("backproject pinhole examples") {
  CameraIntrinsics intr{50.0, 50.0, 32.0, 24.0, 64, 48};
  DepthFrame frame;
  frame.width = 64;
  frame.height = 48;
  frame.data.assign(64 * 48, 0.0f);
  frame.at(32, 24) = 2.0f;  // the principal-point pixel
  CameraPose pose;

  const PointCloud c = backproject(frame, intr, pose);
  REQUIRE(c.size() == 1);
  CHECK((c.points.col(0) - Eigen::Vector3d(0, 0, 2)).norm() < 1e-12);

  CameraPose shifted;
  shifted.translation = Eigen::Vector3d(1, 0, 0);
  const PointCloud cs = backproject(frame, intr, shifted);
  CHECK((cs.points.col(0) - Eigen::Vector3d(1, 0, 2)).norm() < 1e-12);
}

TEST_CASE("backproject x-coordinate follows (u - cx) * d / fx") {
  CameraIntrinsics intr{1.0, 1.0, 0.0, 0.0, 8, 8};
  DepthFrame frame;
  frame.width = 8;
  frame.height = 8;
  frame.data.assign(64, 0.0f);
  frame.at(1, 0) = 2.0f;
  const PointCloud c = backproject(frame, intr, CameraPose{});
  REQUIRE(c.size() == 1);
  CHECK(c.points(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("backproject rejects an all-zero frame") {
  CameraIntrinsics intr{50.0, 50.0, 16.0, 12.0, 32, 24};
  DepthFrame frame;
  frame.width = 32;
  frame.height = 24;
  frame.data.assign(32 * 24, 0.0f);
  CHECK_THROWS_AS(backproject(frame, intr, CameraPose{}), std::invalid_argument);
}

TEST_CASE("project recovers pixel and depth after backproject") {
  RngStream rng(41);
  CameraIntrinsics intr{55.0, 60.0, 31.5, 23.5, 64, 48};
  for (int trial = 0; trial < 20; ++trial) {
    CameraPose pose;
    pose.rotation = random_rotation(rng);
    for (int a = 0; a < 3; ++a) pose.translation[a] = rng.uniform(-1, 1);

    DepthFrame frame;
    frame.width = 64;
    frame.height = 48;
    frame.data.assign(64 * 48, 0.0f);
    for (int i = 0; i < 50; ++i)
      frame.at(rng.uniform_int(0, 64), rng.uniform_int(0, 48)) = static_cast<float>(rng.uniform(0.5, 5.0));

    const PointCloud cloud = backproject(frame, intr, pose);
    Eigen::Index at = 0;
    for (int v = 0; v < 48; ++v) {
      for (int u = 0; u < 64; ++u) {
        const double d = frame.at(u, v);
        if (d <= 0.0) continue;
        const Eigen::Vector3d uvd = project_point(cloud.points.col(at++), intr, pose);
        CHECK(std::abs(uvd.x() - u) < 1e-9);
        CHECK(std::abs(uvd.y() - v) < 1e-9);
        CHECK(std::abs(uvd.z() - d) < 1e-9);
      }
    }
  }
}

TEST_CASE("normalize_unit_sphere examples and idempotence") {
  const PointCloud pair = make_cloud({{0, 0, 0}, {2, 0, 0}});
  const PointCloud n = normalize_unit_sphere(pair);
  CHECK((n.points.col(0) - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);
  CHECK((n.points.col(1) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);

  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const PointCloud c = random_cloud(rng, 30);
    const PointCloud once = normalize_unit_sphere(c);
    CHECK(once.points.rowwise().mean().norm() < 1e-9);
    CHECK(once.points.colwise().norm().maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
    const PointCloud twice = normalize_unit_sphere(once);
    CHECK((twice.points - once.points).cwiseAbs().maxCoeff() < 1e-9);
  }

  const PointCloud degenerate = make_cloud({{3, 3, 3}, {3, 3, 3}});
  const PointCloud zeroed = normalize_unit_sphere(degenerate);
  CHECK(zeroed.points.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("temporal transform: all parts skipped gives the identity") {
  TemporalConfig cfg;
  cfg.part_prob = 0.0;
  RngStream rng(1);
  const RigidScaleTransform t = sample_temporal_transform(rng, Eigen::Vector3d(1, 1, 1), cfg);
  CHECK(t.rotation.isApprox(Eigen::Matrix3d::Identity()));
  CHECK(t.translation.norm() == 0.0);
  CHECK(t.scale == 1.0);
}

TEST_CASE("temporal transform Monte Carlo: ranges and inclusion rates") {
  TemporalConfig cfg;
  RngStream rng(99);
  const int n = 10000;
  int rot = 0, trans = 0, seen_scale = 0;
  for (int i = 0; i < n; ++i) {
    const TemporalSample s = sample_temporal_params(rng, cfg);
    if (s.rotate) {
      ++rot;
      for (int a = 0; a < 3; ++a) {
        CHECK(s.angles_deg[a] >= -15.0);
        CHECK(s.angles_deg[a] <= 15.0);
      }
    }
    if (s.translate) {
      ++trans;
      for (int a = 0; a < 3; ++a) {
        CHECK(s.translation_ratios[a] >= -0.1);
        CHECK(s.translation_ratios[a] <= 0.1);
      }
    }
    if (s.rescale) {
      ++seen_scale;
      CHECK(s.scale >= 0.8);
      CHECK(s.scale <= 1.25);
    }
  }
  CHECK(std::abs(rot / double(n) - 0.5) < 0.02);
  CHECK(std::abs(trans / double(n) - 0.5) < 0.02);
  CHECK(std::abs(seen_scale / double(n) - 0.5) < 0.02);
}

TEST_CASE("temporal translation scales with the bounding-box extents") {
  TemporalConfig cfg;
  cfg.part_prob = 1.0;
  RngStream rng(5);
  const Eigen::Vector3d ext(10.0, 1.0, 0.1);
  for (int i = 0; i < 1000; ++i) {
    const RigidScaleTransform t = sample_temporal_transform(rng, ext, cfg);
    for (int a = 0; a < 3; ++a) CHECK(std::abs(t.translation[a]) <= 0.1 * ext[a] + 1e-12);
  }
}

TEST_CASE("transform validation rejects broken rotations and scales") {
  RigidScaleTransform t;
  t.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  RigidScaleTransform s;
  s.scale = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  RigidScaleTransform reflect;
  reflect.rotation = -Eigen::Matrix3d::Identity();  // orthonormal but det = -1
  CHECK_THROWS_AS(reflect.validate(), std::invalid_argument);
}
