#include "pointssl/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pointssl/checkpoint.hpp"
#include "pointssl/io.hpp"

namespace pointssl {

namespace fs = std::filesystem;

namespace {

const std::set<std::string>& known_pretrain_keys() {
  static const std::set<std::string> keys{
      // data
      "dataset", "data_dir", "classes", "samples_per_class", "points_per_shape", "noise_sigma",
      "pose_translation_max",
      // model
      "encoder_widths", "encoder_bn", "projector_hidden", "projector_dim", "precision",
      // temporal sampling
      "temporal", "synthetic_steps", "window_len", "keyframe_stride", "enhance_natural",
      // spatial augmentation
      "target_points", "normalize", "crop_prob", "cutout_prob", "jitter_max", "min_surviving_points",
      // optimization
      "steps", "batch", "base_lr", "warmup_epochs", "tau_start", "trust_coeff", "weight_decay", "lars_momentum",
      "bn_stats",
      // run control
      "seed", "checkpoint_every"};
  return keys;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

TrainSetup resolve_train_setup(const ConfigMap& cfg) {
  require_known_keys(cfg, known_pretrain_keys());
  TrainSetup s;

  s.dataset = get_string(cfg, "dataset", "toy");
  if (s.dataset != "toy" && s.dataset != "clouds" && s.dataset != "sequences")
    throw ConfigError("config key 'dataset': expected toy, clouds or sequences, got '" + s.dataset + "'");
  s.data_dir = get_string(cfg, "data_dir", "");
  if (s.dataset != "toy" && s.data_dir.empty())
    throw ConfigError("config key 'data_dir' is required for dataset = " + s.dataset);

  std::vector<std::string> class_names;
  for (ShapeClass c : s.toy.classes) class_names.push_back(shape_class_name(c));
  class_names = get_string_list(cfg, "classes", class_names);
  s.toy.classes.clear();
  for (const auto& name : class_names) s.toy.classes.push_back(shape_class_from_name(name));
  s.toy.samples_per_class = static_cast<int>(get_int(cfg, "samples_per_class", s.toy.samples_per_class));
  s.toy.points_per_shape = static_cast<int>(get_int(cfg, "points_per_shape", s.toy.points_per_shape));
  s.toy.noise_sigma = get_double(cfg, "noise_sigma", s.toy.noise_sigma);
  s.toy.pose_translation_max = get_double(cfg, "pose_translation_max", s.toy.pose_translation_max);

  s.model.encoder_widths = get_int_list(cfg, "encoder_widths", s.model.encoder_widths);
  s.model.encoder_bn = get_bool(cfg, "encoder_bn", s.model.encoder_bn);
  s.model.projector_hidden = static_cast<int>(get_int(cfg, "projector_hidden", s.model.projector_hidden));
  s.model.projector_dim = static_cast<int>(get_int(cfg, "projector_dim", s.model.projector_dim));

  const std::string precision = get_string(cfg, "precision", "f64");
  if (precision != "f64" && precision != "f32")
    throw ConfigError("config key 'precision': expected f64 or f32, got '" + precision + "'");
  s.use_f32 = precision == "f32";

  s.train.use_temporal = get_bool(cfg, "temporal", s.train.use_temporal);
  s.sampler.synthetic_steps = static_cast<int>(get_int(cfg, "synthetic_steps", s.sampler.synthetic_steps));
  s.sampler.window_len = static_cast<int>(get_int(cfg, "window_len", s.sampler.window_len));
  s.sampler.keyframe_stride = static_cast<int>(get_int(cfg, "keyframe_stride", s.sampler.keyframe_stride));
  s.sampler.enhance_natural = get_bool(cfg, "enhance_natural", s.sampler.enhance_natural);

  s.aug.target_points = static_cast<int>(get_int(cfg, "target_points", s.aug.target_points));
  s.aug.normalize = get_bool(cfg, "normalize", s.aug.normalize);
  s.aug.crop_prob = get_double(cfg, "crop_prob", s.aug.crop_prob);
  s.aug.cutout_prob = get_double(cfg, "cutout_prob", s.aug.cutout_prob);
  s.aug.jitter_max = get_double(cfg, "jitter_max", s.aug.jitter_max);
  s.aug.min_surviving_points = static_cast<int>(get_int(cfg, "min_surviving_points", s.aug.min_surviving_points));

  s.train.steps = get_int(cfg, "steps", s.train.steps);
  s.train.batch = static_cast<int>(get_int(cfg, "batch", s.train.batch));
  s.train.base_lr = get_double(cfg, "base_lr", s.train.base_lr);
  s.train.warmup_epochs = static_cast<int>(get_int(cfg, "warmup_epochs", s.train.warmup_epochs));
  s.train.tau_start = get_double(cfg, "tau_start", s.train.tau_start);
  s.train.trust_coeff = get_double(cfg, "trust_coeff", s.train.trust_coeff);
  s.train.weight_decay = get_double(cfg, "weight_decay", s.train.weight_decay);
  s.train.lars_momentum = get_double(cfg, "lars_momentum", s.train.lars_momentum);
  const std::string bn_stats = get_string(cfg, "bn_stats", "copy");
  if (bn_stats != "copy" && bn_stats != "ema")
    throw ConfigError("config key 'bn_stats': expected copy or ema, got '" + bn_stats + "'");
  s.train.bn_stats = bn_stats == "copy" ? TargetStatsMode::CopyOnline : TargetStatsMode::Ema;

  s.seed = static_cast<std::uint64_t>(get_int(cfg, "seed", 42));
  s.checkpoint_every = get_int(cfg, "checkpoint_every", 0);

  s.model.validate();
  s.train.validate();
  s.aug.validate();
  if (s.dataset == "toy") s.toy.validate();

  // Pin every key so the echo (and the checkpoint) records the full run.
  s.resolved["dataset"] = s.dataset;
  if (!s.data_dir.empty()) s.resolved["data_dir"] = s.data_dir;
  s.resolved["classes"] = [&] {
    std::string out;
    for (std::size_t i = 0; i < s.toy.classes.size(); ++i) {
      if (i) out += ',';
      out += shape_class_name(s.toy.classes[i]);
    }
    return out;
  }();
  s.resolved["samples_per_class"] = std::to_string(s.toy.samples_per_class);
  s.resolved["points_per_shape"] = std::to_string(s.toy.points_per_shape);
  s.resolved["noise_sigma"] = fmt_double(s.toy.noise_sigma);
  s.resolved["pose_translation_max"] = fmt_double(s.toy.pose_translation_max);
  s.resolved["encoder_widths"] = join_ints(s.model.encoder_widths);
  s.resolved["encoder_bn"] = s.model.encoder_bn ? "on" : "off";
  s.resolved["projector_hidden"] = std::to_string(s.model.projector_hidden);
  s.resolved["projector_dim"] = std::to_string(s.model.projector_dim);
  s.resolved["precision"] = s.use_f32 ? "f32" : "f64";
  s.resolved["temporal"] = s.train.use_temporal ? "on" : "off";
  s.resolved["synthetic_steps"] = std::to_string(s.sampler.synthetic_steps);
  s.resolved["window_len"] = std::to_string(s.sampler.window_len);
  s.resolved["keyframe_stride"] = std::to_string(s.sampler.keyframe_stride);
  s.resolved["enhance_natural"] = s.sampler.enhance_natural ? "on" : "off";
  s.resolved["target_points"] = std::to_string(s.aug.target_points);
  s.resolved["normalize"] = s.aug.normalize ? "on" : "off";
  s.resolved["crop_prob"] = fmt_double(s.aug.crop_prob);
  s.resolved["cutout_prob"] = fmt_double(s.aug.cutout_prob);
  s.resolved["jitter_max"] = fmt_double(s.aug.jitter_max);
  s.resolved["min_surviving_points"] = std::to_string(s.aug.min_surviving_points);
  s.resolved["steps"] = std::to_string(s.train.steps);
  s.resolved["batch"] = std::to_string(s.train.batch);
  s.resolved["base_lr"] = fmt_double(s.train.base_lr);
  s.resolved["warmup_epochs"] = std::to_string(s.train.warmup_epochs);
  s.resolved["tau_start"] = fmt_double(s.train.tau_start);
  s.resolved["trust_coeff"] = fmt_double(s.train.trust_coeff);
  s.resolved["weight_decay"] = fmt_double(s.train.weight_decay);
  s.resolved["lars_momentum"] = fmt_double(s.train.lars_momentum);
  s.resolved["bn_stats"] = bn_stats;
  s.resolved["seed"] = std::to_string(s.seed);
  s.resolved["checkpoint_every"] = std::to_string(s.checkpoint_every);
  s.echo = config_echo(s.resolved);
  return s;
}

std::function<CloudPair(RngStream&)> make_cloud_pair_sampler(std::vector<PointCloud> clouds,
                                                             const SamplerConfig& sampler, bool use_temporal) {
  if (clouds.empty()) throw std::invalid_argument("pair sampler: empty cloud dataset");
  auto data = std::make_shared<std::vector<PointCloud>>(std::move(clouds));
  return [data, sampler, use_temporal](RngStream& rng) -> CloudPair {
    const auto& cloud = (*data)[rng.next_below(data->size())];
    if (!use_temporal) return {cloud, cloud};
    return make_synthetic_pair(cloud, rng, sampler);
  };
}

std::function<CloudPair(RngStream&)> make_sequence_pair_sampler(std::vector<DepthSequence> keyframed,
                                                                const SamplerConfig& sampler) {
  if (keyframed.empty()) throw std::invalid_argument("pair sampler: empty sequence dataset");
  auto data = std::make_shared<std::vector<DepthSequence>>(std::move(keyframed));
  return [data, sampler](RngStream& rng) -> CloudPair {
    const auto& seq = (*data)[rng.next_below(data->size())];
    CloudPair pair = sample_natural_pair(seq, rng, sampler);
    return enhance_pair(pair, rng, sampler);
  };
}

namespace {

template <typename Scalar>
PretrainResult run_pretrain_impl(const TrainSetup& setup, const std::string& out_dir,
                                 const std::function<CloudPair(RngStream&)>& sampler, std::size_t dataset_size) {
  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.log").string();
  const std::string final_path = (fs::path(out_dir) / "checkpoint_final.ckpt").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open '" + metrics_path + "' for writing");

  double last_loss = 0.0;
  TrainCallbacks<Scalar> callbacks;
  callbacks.checkpoint_every = setup.checkpoint_every;
  callbacks.on_step = [&](std::int64_t k, const StepResult<Scalar>& r) {
    metrics << k << ' ' << fmt_double(r.loss) << ' ' << fmt_double(r.lr) << ' ' << fmt_double(r.tau) << '\n';
    last_loss = r.loss;
  };
  callbacks.on_checkpoint = [&](std::int64_t k, const EncoderParams<Scalar>& enc) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_%06lld.ckpt", static_cast<long long>(k));
    save_encoder_checkpoint((fs::path(out_dir) / name).string(), enc, setup.echo);
  };

  RngStream root(setup.seed);
  EncoderParams<Scalar> encoder =
      train<Scalar>(sampler, dataset_size, setup.train, setup.model, setup.aug, root, nullptr, &callbacks);
  metrics.close();
  if (!metrics) throw std::runtime_error("write to '" + metrics_path + "' failed");

  save_encoder_checkpoint(final_path, encoder, setup.echo);
  return {final_path, metrics_path, last_loss};
}

}  // namespace

PretrainResult run_pretrain(const TrainSetup& setup, const std::string& out_dir) {
  std::function<CloudPair(RngStream&)> sampler;
  std::size_t dataset_size = 0;

  if (setup.dataset == "sequences") {
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(setup.data_dir)) {
      if (entry.is_directory()) dirs.push_back(entry.path().string());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw std::runtime_error("no sequence directories in '" + setup.data_dir + "'");
    std::vector<DepthSequence> keyframed;
    for (const auto& d : dirs)
      keyframed.push_back(subsample_keyframes(load_depth_sequence(d), setup.sampler.keyframe_stride));
    dataset_size = keyframed.size();
    sampler = make_sequence_pair_sampler(std::move(keyframed), setup.sampler);
  } else {
    std::vector<PointCloud> clouds;
    if (setup.dataset == "toy") {
      RngStream root(setup.seed);
      clouds = generate_toy_shapes(root.child(2), setup.toy);
    } else {
      clouds = load_cloud_dir(setup.data_dir);
    }
    dataset_size = clouds.size();
    sampler = make_cloud_pair_sampler(std::move(clouds), setup.sampler, setup.train.use_temporal);
  }

  return setup.use_f32 ? run_pretrain_impl<float>(setup, out_dir, sampler, dataset_size)
                       : run_pretrain_impl<double>(setup, out_dir, sampler, dataset_size);
}

ProbeOutcome probe_encoder(const EncoderParams<double>& encoder, const std::vector<PointCloud>& train_clouds,
                           const std::vector<PointCloud>& test_clouds, int points_per_shape, bool normalize,
                           std::uint64_t seed, double fraction) {
  RngStream root(seed);
  ProbeOutcome out;
  out.train_features = extract_features(encoder, train_clouds, points_per_shape, root.child(0), normalize);
  out.test_features = extract_features(encoder, test_clouds, points_per_shape, root.child(1), normalize);

  FeatureSet probe_train = out.train_features;
  if (fraction < 1.0) {
    RngStream subset_rng = root.child(2);
    const std::vector<int> idx =
        semi_supervised_subset(out.train_features.labels, out.train_features.class_count, fraction, subset_rng);
    probe_train = subset_features(out.train_features, idx);
  }
  const LinearModel model = train_linear_probe(probe_train);
  out.accuracy = evaluate(model, out.test_features);
  return out;
}

}  // namespace pointssl
