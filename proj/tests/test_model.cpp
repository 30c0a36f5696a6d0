#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pointssl/checkpoint.hpp"
#include "pointssl/model.hpp"
#include "pointssl/rng.hpp"

using namespace pointssl;
using T = Tensor<double>;

namespace {

ModelConfig tiny_config() {
  ModelConfig mc;
  mc.encoder_widths = {8, 12};
  mc.projector_hidden = 10;
  mc.projector_dim = 6;
  return mc;
}

T random_batch(RngStream& rng, Eigen::Index B, Eigen::Index N) {
  VecX<double> v(B * N * 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1, 1);
  return T({B, N, 3}, std::move(v));
}

bool params_equal(EncoderParams<double>& a, EncoderParams<double>& b) {
  std::vector<std::pair<double*, Eigen::Index>> spans;
  for_each_param(a, "e", [&](const std::string&, ParamKind, double* d, Eigen::Index n) { spans.push_back({d, n}); });
  std::size_t at = 0;
  bool equal = true;
  for_each_param(b, "e", [&](const std::string&, ParamKind, double* d, Eigen::Index n) {
    auto [src, sn] = spans.at(at++);
    if (sn != n) {
      equal = false;
      return;
    }
    for (Eigen::Index i = 0; i < n; ++i) equal = equal && src[i] == d[i];
  });
  return equal && at == spans.size();
}

}  // namespace

TEST_CASE("init: target is a bitwise copy of online, same seed replays") {
  const ModelConfig mc = tiny_config();
  RngStream r1(5), r2(5);
  DualNetState<double> a = init_dual_net<double>(r1, mc);
  DualNetState<double> b = init_dual_net<double>(r2, mc);
  CHECK(params_equal(a.online_encoder, a.target_encoder));
  CHECK(params_equal(a.online_encoder, b.online_encoder));
}

TEST_CASE("init: weight magnitudes bounded by sqrt(1/fan_in), biases zero") {
  const ModelConfig mc = tiny_config();
  RngStream rng(7);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  int fan_in = 3;
  for (const auto& layer : s.online_encoder.layers) {
    const double bound = std::sqrt(1.0 / fan_in);
    CHECK(layer.weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(layer.bias.cwiseAbs().maxCoeff() == 0.0);
    fan_in = static_cast<int>(layer.weight.cols());
  }
  for (const auto& bn : s.online_encoder.bn) {
    CHECK(bn.gamma.minCoeff() == 1.0);
    CHECK(bn.beta.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("init rejects invalid widths") {
  ModelConfig mc = tiny_config();
  mc.encoder_widths = {8, 0};
  RngStream rng(1);
  CHECK_THROWS_AS(init_encoder<double>(rng, mc), std::invalid_argument);
}

TEST_CASE("encode output width and batch shape") {
  const ModelConfig mc = tiny_config();
  RngStream rng(11);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  T batch = random_batch(rng, 4, 9);
  const T out = encode_eval(batch, s.online_encoder);
  CHECK(out.dim(0) == 4);
  CHECK(out.dim(1) == 12);
}

TEST_CASE("encode is exactly invariant to point permutation and duplication") {
  const ModelConfig mc = tiny_config();
  RngStream rng(13);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index N = 5 + static_cast<Eigen::Index>(rng.next_below(8));
    VecX<double> v(N * 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1, 1);
    const T x({1, N, 3}, v);

    // Rotate the point order by a random offset.
    const Eigen::Index shift = 1 + static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(N - 1)));
    VecX<double> perm(N * 3);
    for (Eigen::Index n = 0; n < N; ++n) perm.segment(((n + shift) % N) * 3, 3) = v.segment(n * 3, 3);
    const T xp({1, N, 3}, perm);

    // Duplicate every point.
    VecX<double> dup(2 * N * 3);
    for (Eigen::Index n = 0; n < N; ++n) {
      dup.segment(2 * n * 3, 3) = v.segment(n * 3, 3);
      dup.segment((2 * n + 1) * 3, 3) = v.segment(n * 3, 3);
    }
    const T xd({1, 2 * N, 3}, dup);

    const T y = encode_eval(x, s.online_encoder);
    const T yp = encode_eval(xp, s.online_encoder);
    const T yd = encode_eval(xd, s.online_encoder);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      CHECK(y.data()(i) == yp.data()(i));
      CHECK(y.data()(i) == yd.data()(i));
    }
  }
}

TEST_CASE("eval-mode forward is pure (repeated calls agree bitwise)") {
  const ModelConfig mc = tiny_config();
  RngStream rng(17);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  T batch = random_batch(rng, 2, 6);
  const T a = encode_eval(batch, s.online_encoder);
  const T b = encode_eval(batch, s.online_encoder);
  for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(a.data()(i) == b.data()(i));
}

TEST_CASE("heads: zero input with unit eval statistics maps to zero") {
  const ModelConfig mc = tiny_config();
  RngStream rng(19);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  VecX<double> z = VecX<double>::Zero(3 * mc.encoder_widths.back());
  T zt({3, mc.encoder_widths.back()}, z);
  const T out = project(s.online_projector, zt, BnMode::Eval);
  CHECK(out.dim(1) == mc.projector_dim);
  CHECK(out.data().cwiseAbs().maxCoeff() == 0.0);  // zero weights would do it; zero input + zero bias does too
}

TEST_CASE("head width mismatch raises") {
  const ModelConfig mc = tiny_config();
  RngStream rng(23);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  VecX<double> z = VecX<double>::Zero(4);
  T zt({1, 4}, z);
  CHECK_THROWS_AS(project(s.online_projector, zt, BnMode::Eval), std::invalid_argument);
}

TEST_CASE("full head chain output width") {
  const ModelConfig mc = tiny_config();
  RngStream rng(29);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  T batch = random_batch(rng, 3, 7);
  const T feat = encode_eval(batch, s.online_encoder);
  const T z = project(s.online_projector, feat, BnMode::Eval);
  const T p = predict(s.predictor, z, BnMode::Eval);
  CHECK(z.dim(1) == mc.projector_dim);
  CHECK(p.dim(1) == mc.projector_dim);
}

TEST_CASE("encoder works with per-point batch norm disabled") {
  ModelConfig mc = tiny_config();
  mc.encoder_bn = false;
  RngStream rng(41);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  T batch = random_batch(rng, 2, 5);
  const T out = encode_eval(batch, s.online_encoder);
  CHECK(out.dim(1) == 12);

  const std::string echo = "encoder_bn = off\nencoder_widths = 8,12\n";
  const std::string path = (std::filesystem::temp_directory_path() / "pointssl_ckpt_nobn.ckpt").string();
  save_encoder_checkpoint(path, s.online_encoder, echo);
  LoadedCheckpoint loaded = load_encoder_checkpoint(path);
  CHECK(loaded.encoder.use_bn == false);
  CHECK((loaded.encoder.layers[1].weight - s.online_encoder.layers[1].weight).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint round trip preserves weights bitwise") {
  const ModelConfig mc = tiny_config();
  RngStream rng(31);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  // Perturb running stats so they round-trip too.
  s.online_encoder.bn[0].running_mean.setConstant(0.25);

  const std::string echo = "encoder_bn = on\nencoder_widths = 8,12\nnormalize = on\n";
  const std::string path = (std::filesystem::temp_directory_path() / "pointssl_ckpt_test.ckpt").string();
  save_encoder_checkpoint(path, s.online_encoder, echo);
  LoadedCheckpoint loaded = load_encoder_checkpoint(path);
  CHECK(loaded.config_echo == echo);
  CHECK(params_equal(loaded.encoder, s.online_encoder));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects corruption") {
  const ModelConfig mc = tiny_config();
  RngStream rng(37);
  DualNetState<double> s = init_dual_net<double>(rng, mc);
  const std::string echo = "encoder_bn = on\nencoder_widths = 8,12\n";
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "pointssl_ckpt_corrupt.ckpt").string();
  save_encoder_checkpoint(path, s.online_encoder, echo);

  // Flip one payload byte: checksum must catch it.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    char c;
    f.seekg(40);
    f.get(c);
    f.seekp(40);
    f.put(static_cast<char>(c ^ 0x01));
  }
  CHECK_THROWS(load_encoder_checkpoint(path));

  // Truncation names the missing bytes.
  save_encoder_checkpoint(path, s.online_encoder, echo);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_WITH_AS(load_encoder_checkpoint(path), doctest::Contains("truncated"), std::runtime_error);
  std::filesystem::remove(path);
}
