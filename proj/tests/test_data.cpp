#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "pointssl/config.hpp"
#include "pointssl/datagen.hpp"
#include "pointssl/io.hpp"
#include "pointssl/sequence.hpp"

using namespace pointssl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

double mean_pairwise_distance(const PointCloud& c, int limit = 100) {
  const Eigen::Index n = std::min<Eigen::Index>(c.size(), limit);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sum += (c.points.col(i) - c.points.col(j)).norm();
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

TEST_CASE("toy shapes: noiseless sphere points sit on the unit sphere") {
  ToyShapeConfig cfg;
  cfg.classes = {ShapeClass::Sphere, ShapeClass::CubeSurface};
  cfg.samples_per_class = 4;
  cfg.points_per_shape = 256;
  cfg.noise_sigma = 0.0;
  const auto clouds = generate_toy_shapes(RngStream(3), cfg);
  REQUIRE(clouds.size() == 8);
  for (int s = 0; s < 4; ++s) {
    REQUIRE(clouds[static_cast<std::size_t>(s)].label == 0);
    const auto norms = clouds[static_cast<std::size_t>(s)].points.colwise().norm();
    CHECK(std::abs(norms.maxCoeff() - 1.0) < 1e-9);
    CHECK(std::abs(norms.minCoeff() - 1.0) < 1e-9);
  }
}

TEST_CASE("toy shapes: output count and labels per class") {
  ToyShapeConfig cfg;
  cfg.classes = {ShapeClass::Cylinder, ShapeClass::Torus, ShapeClass::Cone};
  cfg.samples_per_class = 5;
  cfg.points_per_shape = 64;
  const auto clouds = generate_toy_shapes(RngStream(5), cfg);
  REQUIRE(clouds.size() == 15);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    CHECK(clouds[i].label == static_cast<int>(i / 5));
    CHECK(clouds[i].size() == 64);
  }
}

TEST_CASE("toy shapes: generation is deterministic per seed") {
  ToyShapeConfig cfg;
  cfg.classes = {ShapeClass::Sphere, ShapeClass::Torus};
  cfg.samples_per_class = 4;
  cfg.points_per_shape = 32;
  const auto a = generate_toy_shapes(RngStream(11), cfg);
  const auto b = generate_toy_shapes(RngStream(11), cfg);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].points - b[i].points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("toy shapes: sphere and cube pairwise-distance statistics separate") {
  ToyShapeConfig cfg;
  cfg.classes = {ShapeClass::Sphere, ShapeClass::CubeSurface};
  cfg.samples_per_class = 100;
  cfg.points_per_shape = 128;
  const auto clouds = generate_toy_shapes(RngStream(7), cfg);
  std::vector<double> sphere_stats, cube_stats;
  for (const auto& c : clouds)
    (c.label == 0 ? sphere_stats : cube_stats).push_back(mean_pairwise_distance(c));
  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0;
    for (double x : v) s2 += (x - m) * (x - m);
    return std::pair<double, double>(m, std::sqrt(s2 / static_cast<double>(v.size() - 1)));
  };
  const auto [ms, ss] = mean_sd(sphere_stats);
  const auto [mc, sc] = mean_sd(cube_stats);
  const double gap = std::abs(ms - mc);
  const double pooled = std::sqrt((ss * ss + sc * sc) / 100.0);
  CHECK(gap > 3.0 * pooled);  // class statistics differ at 3 sigma
}

TEST_CASE("depth scene: center pixel of a pure plane view reads the plane depth") {
  // Identity-pose camera at the origin looking down +z at the plane z = 2.
  CameraIntrinsics intr{40.0, 40.0, 15.5, 11.5, 32, 24};
  DepthFrame frame;
  frame.width = 32;
  frame.height = 24;
  frame.data.assign(32 * 24, 0.0f);
  // Ray cast by the same rule the generator uses: parameter along unit-z dir.
  for (int v = 0; v < 24; ++v)
    for (int u = 0; u < 32; ++u) frame.at(u, v) = 2.0f;
  const PointCloud c = backproject(frame, intr, CameraPose{});
  for (Eigen::Index i = 0; i < c.size(); ++i) CHECK(c.points(2, i) == doctest::Approx(2.0));
}

TEST_CASE("generated depth sequence: smooth poses and frame overlap") {
  DepthSceneConfig cfg;
  cfg.width = 48;
  cfg.height = 36;
  cfg.frames = 210;
  const DepthSequence seq = generate_depth_sequence(RngStream(13), cfg);
  REQUIRE(seq.frames.size() == 210);
  seq.validate();

  // Consecutive rotations differ by less than 2 degrees.
  for (std::size_t f = 1; f < seq.poses.size(); ++f) {
    const Eigen::Matrix3d rel = seq.poses[f - 1].rotation.transpose() * seq.poses[f].rotation;
    const double angle = std::acos(std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0));
    CHECK(angle < 2.0 * M_PI / 180.0);
  }

  // Non-degenerate depth content.
  int valid = 0;
  for (float d : seq.frames[0].data)
    if (d > 0) ++valid;
  CHECK(valid > 100);

  // Two consecutive frames of a static scene nearly coincide after
  // back-projection: median nearest-neighbor gap below twice the pixel
  // footprint at the scene depth.
  const PointCloud a = backproject(seq.frames[0], seq.intrinsics, seq.poses[0]);
  const PointCloud b = backproject(seq.frames[1], seq.intrinsics, seq.poses[1]);
  std::vector<double> nn;
  std::vector<double> depths;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b.size(); ++j)
      best = std::min(best, (a.points.col(i) - b.points.col(j)).norm());
    nn.push_back(best);
  }
  for (float d : seq.frames[0].data)
    if (d > 0) depths.push_back(d);
  std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  const double median_nn = nn[nn.size() / 2];
  const double median_depth = depths[depths.size() / 2];
  CHECK(median_nn < 2.0 * median_depth / cfg.fx);
}

TEST_CASE("xyz save-load round trip with label") {
  TempDir dir("pointssl_xyz_test");
  PointCloud c;
  c.points.resize(3, 1);
  c.points.col(0) = Eigen::Vector3d(1, 2, 3);
  c.label = 7;
  const std::string path = (dir.path / "one.xyz").string();
  save_cloud_xyz(c, path);
  const PointCloud back = load_cloud_xyz(path);
  REQUIRE(back.size() == 1);
  CHECK(back.points(0, 0) == 1.0);
  CHECK(back.points(1, 0) == 2.0);
  CHECK(back.points(2, 0) == 3.0);
  CHECK(back.label == 7);
}

TEST_CASE("xyz loader reports malformed lines with their number") {
  TempDir dir("pointssl_xyz_bad");
  const std::string path = (dir.path / "bad.xyz").string();
  {
    std::ofstream f(path);
    f << "1 2 3\nnot a point\n";
  }
  CHECK_THROWS_WITH_AS(load_cloud_xyz(path), doctest::Contains(":2"), std::runtime_error);
}

TEST_CASE("binary cloud round trip at f32 precision") {
  TempDir dir("pointssl_pcb_test");
  RngStream rng(17);
  PointCloud c;
  c.points.resize(3, 1000);
  for (int i = 0; i < 1000; ++i)
    for (int a = 0; a < 3; ++a) c.points(a, i) = rng.uniform(-10, 10);
  const std::string path = (dir.path / "cloud.pcb").string();
  save_cloud_binary(c, path);
  const PointCloud back = load_cloud_binary(path);
  REQUIRE(back.size() == 1000);
  CHECK((back.points - c.points).cwiseAbs().maxCoeff() < 1e-5);  // f32 rounding
}

TEST_CASE("binary loader names the missing byte count on truncation") {
  TempDir dir("pointssl_pcb_trunc");
  PointCloud c;
  c.points.resize(3, 10);
  c.points.setZero();
  c.points.row(0).setLinSpaced(10, 0.0, 9.0);
  const std::string path = (dir.path / "cloud.pcb").string();
  save_cloud_binary(c, path);
  fs::resize_file(path, 40);  // expected 12 + 120 = 132 bytes
  CHECK_THROWS_WITH_AS(load_cloud_binary(path), doctest::Contains("missing 92 bytes"), std::runtime_error);

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "XXXX";
  }
  CHECK_THROWS_WITH_AS(load_cloud_binary(path), doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("depth sequence directory round trip is lossless") {
  TempDir dir("pointssl_seq_test");
  DepthSceneConfig cfg;
  cfg.width = 24;
  cfg.height = 18;
  cfg.frames = 5;
  const DepthSequence seq = generate_depth_sequence(RngStream(19), cfg);
  save_depth_sequence(seq, dir.path.string());
  const DepthSequence back = load_depth_sequence(dir.path.string());
  REQUIRE(back.frames.size() == 5);
  CHECK(back.intrinsics.fx == seq.intrinsics.fx);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(back.frames[f].data == seq.frames[f].data);  // exact f32 payload
    CHECK((back.poses[f].rotation - seq.poses[f].rotation).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.poses[f].translation - seq.poses[f].translation).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("depth sequence loader rejects structural problems") {
  TempDir dir("pointssl_seq_bad");
  DepthSceneConfig cfg;
  cfg.width = 24;
  cfg.height = 18;
  cfg.frames = 3;
  const DepthSequence seq = generate_depth_sequence(RngStream(23), cfg);
  save_depth_sequence(seq, dir.path.string());

  SUBCASE("missing pose file") {
    fs::remove(dir.path / "frame_000001.pose");
    CHECK_THROWS_WITH_AS(load_depth_sequence(dir.path.string()), doctest::Contains("missing pose"),
                         std::runtime_error);
  }

  SUBCASE("non-orthonormal rotation beyond 1e-6 is rejected") {
    // Perturb one rotation entry by 1e-3.
    std::ifstream in(dir.path / "frame_000000.pose");
    std::vector<double> vals(12);
    for (double& v : vals) in >> v;
    in.close();
    vals[0] += 1e-3;
    std::ofstream out(dir.path / "frame_000000.pose", std::ios::trunc);
    for (std::size_t i = 0; i < 12; ++i) out << (i ? " " : "") << vals[i];
    out.close();
    CHECK_THROWS_WITH_AS(load_depth_sequence(dir.path.string()), doctest::Contains("orthonormal"),
                         std::runtime_error);
  }
}

TEST_CASE("config parser: values, comments, and errors") {
  const ConfigMap cfg = parse_config_text("a = 1\nb = 2.5  # comment\n\nname = toy\nflag = on\nlist = 1,2,3\n");
  CHECK(get_int(cfg, "a", 0) == 1);
  CHECK(get_double(cfg, "b", 0) == 2.5);
  CHECK(get_string(cfg, "name", "") == "toy");
  CHECK(get_bool(cfg, "flag", false));
  CHECK(get_int_list(cfg, "list", {}) == std::vector<int>{1, 2, 3});
  CHECK(get_int(cfg, "absent", 9) == 9);

  CHECK_THROWS_AS(parse_config_text("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(get_int(cfg, "b", 0), ConfigError);
  CHECK_THROWS_AS([&] { require_known_keys(cfg, {"a", "b"}); }(), ConfigError);
  require_known_keys(cfg, {"a", "b", "name", "flag", "list"});
}

TEST_CASE("config echo is canonical and reparses to the same map") {
  const ConfigMap cfg = parse_config_text("zeta = 1\nalpha = two\nmid = 3.5\n");
  const std::string echo = config_echo(cfg);
  CHECK(echo == "alpha = two\nmid = 3.5\nzeta = 1\n");
  CHECK(parse_config_text(echo) == cfg);
}
