#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pointssl/datagen.hpp"
#include "pointssl/eval.hpp"
#include "pointssl/model.hpp"

using namespace pointssl;

namespace {

FeatureSet two_separable_clusters(int per_class) {
  FeatureSet fs;
  fs.class_count = 2;
  fs.features.resize(2 * per_class, 2);
  RngStream rng(3);
  for (int i = 0; i < per_class; ++i) {
    fs.features(i, 0) = 2.0 + rng.uniform(-0.5, 0.5);
    fs.features(i, 1) = rng.uniform(-0.5, 0.5);
    fs.labels.push_back(0);
  }
  for (int i = 0; i < per_class; ++i) {
    fs.features(per_class + i, 0) = -2.0 + rng.uniform(-0.5, 0.5);
    fs.features(per_class + i, 1) = rng.uniform(-0.5, 0.5);
    fs.labels.push_back(1);
  }
  return fs;
}

FeatureSet random_features(RngStream& rng, int m, int d, int classes) {
  FeatureSet fs;
  fs.class_count = classes;
  fs.features.resize(m, d);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) fs.features(i, j) = rng.uniform(-1, 1);
    fs.labels.push_back(i % classes);  // balanced labels, independent of features
  }
  return fs;
}

}  // namespace

TEST_CASE("probe reaches training accuracy 1.0 on separable clusters") {
  const FeatureSet train = two_separable_clusters(40);
  const LinearModel model = train_linear_probe(train);
  CHECK(evaluate(model, train) == 1.0);
}

TEST_CASE("probe on label noise stays near chance on held-out data") {
  RngStream rng(5);
  const FeatureSet train = random_features(rng, 400, 8, 2);
  const FeatureSet test = random_features(rng, 2000, 8, 2);
  const LinearModel model = train_linear_probe(train);
  const double acc = evaluate(model, test);
  CHECK(acc > 0.45);
  CHECK(acc < 0.55);
}

TEST_CASE("duplicating every training sample leaves the decision function unchanged") {
  const FeatureSet train = two_separable_clusters(25);
  FeatureSet doubled;
  doubled.class_count = train.class_count;
  doubled.features.resize(2 * train.count(), train.width());
  for (Eigen::Index i = 0; i < train.count(); ++i) {
    doubled.features.row(2 * i) = train.features.row(i);
    doubled.features.row(2 * i + 1) = train.features.row(i);
    doubled.labels.push_back(train.labels[static_cast<std::size_t>(i)]);
    doubled.labels.push_back(train.labels[static_cast<std::size_t>(i)]);
  }
  const LinearModel a = train_linear_probe(train);
  const LinearModel b = train_linear_probe(doubled);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.bias - b.bias).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("probe training is deterministic") {
  RngStream rng(7);
  const FeatureSet train = random_features(rng, 100, 6, 3);
  const LinearModel a = train_linear_probe(train);
  const LinearModel b = train_linear_probe(train);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("probe rejects a missing class") {
  FeatureSet fs = two_separable_clusters(10);
  fs.class_count = 3;  // class 2 has no samples
  CHECK_THROWS_AS(train_linear_probe(fs), std::invalid_argument);
}

TEST_CASE("evaluate: perfect model, width mismatch, tie rule") {
  const FeatureSet fs = two_separable_clusters(20);
  const LinearModel model = train_linear_probe(fs);
  CHECK(evaluate(model, fs) == 1.0);

  LinearModel narrow;
  narrow.weights = Eigen::MatrixXd::Zero(2, 5);
  narrow.bias = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(evaluate(narrow, fs), std::invalid_argument);

  // All-zero scores tie on every class: argmax must pick class 0.
  LinearModel zero;
  zero.weights = Eigen::MatrixXd::Zero(2, 2);
  zero.bias = Eigen::VectorXd::Zero(2);
  const double acc = evaluate(zero, fs);
  CHECK(acc == doctest::Approx(0.5));  // exactly the class-0 fraction
}

TEST_CASE("random uniform scores hit 1/k on balanced classes") {
  RngStream rng(11);
  const int k = 4;
  const FeatureSet test = random_features(rng, 4000, 6, k);
  LinearModel model;
  model.weights.resize(k, 6);  // fixed arbitrary scorer
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < 6; ++j) model.weights(c, j) = rng.uniform(-1, 1);
  model.bias = Eigen::VectorXd::Zero(k);
  const double acc = evaluate(model, test);
  CHECK(std::abs(acc - 1.0 / k) < 0.05);
}

TEST_CASE("semi_supervised_subset counts and class coverage") {
  RngStream rng(13);
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back(i % 10);

  SUBCASE("fraction 1 keeps everything") {
    auto idx = semi_supervised_subset(labels, 10, 1.0, rng);
    CHECK(idx.size() == 1000);
  }

  SUBCASE("1% of 1000 with 10 classes covers every class with exactly 10 indices") {
    auto idx = semi_supervised_subset(labels, 10, 0.01, rng);
    REQUIRE(idx.size() == 10);
    std::set<int> classes;
    for (int i : idx) classes.insert(labels[static_cast<std::size_t>(i)]);
    CHECK(classes.size() == 10);
  }

  SUBCASE("tiny fraction falls back to one per class") {
    auto idx = semi_supervised_subset(labels, 10, 0.001, rng);
    REQUIRE(idx.size() == 10);
    std::set<int> classes;
    for (int i : idx) classes.insert(labels[static_cast<std::size_t>(i)]);
    CHECK(classes.size() == 10);
  }

  SUBCASE("all classes present across many seeds") {
    for (int seed = 0; seed < 1000; ++seed) {
      RngStream r(static_cast<std::uint64_t>(seed));
      auto idx = semi_supervised_subset(labels, 10, 0.02, r);
      std::set<int> classes;
      for (int i : idx) classes.insert(labels[static_cast<std::size_t>(i)]);
      CHECK(classes.size() == 10);
      std::set<int> unique(idx.begin(), idx.end());
      CHECK(unique.size() == idx.size());
    }
  }
}

TEST_CASE("embedding export and import round trip") {
  FeatureSet fs;
  fs.class_count = 2;
  fs.features.resize(2, 2);
  fs.features << 0.125, -3.5e-7, 1.0 / 3.0, 42.0;
  fs.labels = {1, 0};
  const std::string path = (std::filesystem::temp_directory_path() / "pointssl_emb_test.txt").string();
  export_embeddings(fs, path);

  // Two lines, three space-separated fields each.
  {
    std::ifstream f(path);
    std::string line;
    int lines = 0;
    while (std::getline(f, line)) {
      ++lines;
      CHECK(std::count(line.begin(), line.end(), ' ') == 2);
    }
    CHECK(lines == 2);
  }

  const FeatureSet back = import_embeddings(path);
  REQUIRE(back.count() == 2);
  CHECK(back.labels == fs.labels);
  CHECK((back.features - fs.features).cwiseAbs().maxCoeff() < 1e-9);
  std::filesystem::remove(path);
}

TEST_CASE("export line count matches the sample count") {
  RngStream rng(17);
  const FeatureSet fs = random_features(rng, 37, 5, 3);
  const std::string path = (std::filesystem::temp_directory_path() / "pointssl_emb_count.txt").string();
  export_embeddings(fs, path);
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 37);
  std::filesystem::remove(path);
}

TEST_CASE("extract_features: identical and permuted clouds map to equal rows") {
  ModelConfig mc;
  mc.encoder_widths = {8, 10};
  mc.projector_hidden = 8;
  mc.projector_dim = 4;
  RngStream rng(19);
  DualNetState<double> s = init_dual_net<double>(rng, mc);

  ToyShapeConfig toy;
  toy.classes = {ShapeClass::Sphere, ShapeClass::Cone};
  toy.samples_per_class = 4;
  toy.points_per_shape = 64;
  std::vector<PointCloud> clouds = generate_toy_shapes(RngStream(23), toy);

  // Same cloud twice: identical feature rows (deterministic downsampling is
  // per-index, so give both copies the same index by extracting separately).
  std::vector<PointCloud> pairdup{clouds[0]};
  const FeatureSet fa = extract_features(s.online_encoder, pairdup, 32, RngStream(9), true);
  const FeatureSet fb = extract_features(s.online_encoder, pairdup, 32, RngStream(9), true);
  CHECK((fa.features - fb.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fa.width() == 10);

  // A permuted copy maps to the same feature when no downsampling happens.
  PointCloud permuted = clouds[0];
  permuted.points = permuted.points.rowwise().reverse().eval();
  std::vector<PointCloud> one{clouds[0]};
  std::vector<PointCloud> two{permuted};
  const FeatureSet f1 = extract_features(s.online_encoder, one, 64, RngStream(9), true);
  const FeatureSet f2 = extract_features(s.online_encoder, two, 64, RngStream(9), true);
  CHECK((f1.features - f2.features).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fine-tuning the encoder with a cross-entropy head learns a separable toy task") {
  ModelConfig mc;
  mc.encoder_widths = {12, 16};
  mc.projector_hidden = 16;
  mc.projector_dim = 8;
  RngStream init_rng(31);
  const EncoderParams<double> enc = init_encoder<double>(init_rng, mc);

  ToyShapeConfig toy;
  toy.classes = {ShapeClass::Sphere, ShapeClass::PlaneWithNoise};
  toy.samples_per_class = 16;
  toy.points_per_shape = 96;
  const std::vector<PointCloud> train = generate_toy_shapes(RngStream(41), toy);
  toy.samples_per_class = 8;
  const std::vector<PointCloud> test = generate_toy_shapes(RngStream(43), toy);

  FineTuneConfig cfg;
  cfg.steps = 120;
  cfg.batch = 8;
  cfg.points_per_cloud = 64;
  cfg.seed = 5;
  const auto model = fine_tune(enc, train, 2, cfg);
  const double acc = evaluate_fine_tuned(model, test, 96, true, RngStream(7));
  CHECK(acc >= 0.9);  // spheres vs planes are trivially separable once trained

  // The encoder moved: fine-tuning is not a frozen probe.
  CHECK((model.encoder.layers[0].weight - enc.layers[0].weight).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("extract_features rejects an empty dataset") {
  ModelConfig mc;
  mc.encoder_widths = {4};
  RngStream rng(1);
  EncoderParams<double> enc = init_encoder<double>(rng, mc);
  CHECK_THROWS_AS(extract_features(enc, {}, 16, RngStream(1), true), std::invalid_argument);
}
