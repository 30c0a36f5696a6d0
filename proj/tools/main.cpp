#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "pointssl/checkpoint.hpp"
#include "pointssl/config.hpp"
#include "pointssl/datagen.hpp"
#include "pointssl/eval.hpp"
#include "pointssl/gradcheck.hpp"
#include "pointssl/io.hpp"
#include "pointssl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pointssl;

namespace {

int run_gen_data(const std::string& kind, const std::string& out_dir, const std::string& config_path,
                 std::uint64_t seed) {
  const ConfigMap cfg = config_path.empty() ? ConfigMap{} : parse_config_file(config_path);
  fs::create_directories(out_dir);
  if (kind == "shapes") {
    require_known_keys(cfg, {"classes", "samples_per_class", "points_per_shape", "noise_sigma",
                             "pose_translation_max"});
    ToyShapeConfig toy;
    std::vector<std::string> class_names;
    for (ShapeClass c : toy.classes) class_names.push_back(shape_class_name(c));
    class_names = get_string_list(cfg, "classes", class_names);
    toy.classes.clear();
    for (const auto& name : class_names) toy.classes.push_back(shape_class_from_name(name));
    toy.samples_per_class = static_cast<int>(get_int(cfg, "samples_per_class", toy.samples_per_class));
    toy.points_per_shape = static_cast<int>(get_int(cfg, "points_per_shape", toy.points_per_shape));
    toy.noise_sigma = get_double(cfg, "noise_sigma", toy.noise_sigma);
    toy.pose_translation_max = get_double(cfg, "pose_translation_max", toy.pose_translation_max);

    const std::vector<PointCloud> clouds = generate_toy_shapes(RngStream(seed), toy);
    int written = 0;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      const int c = clouds[i].label;
      const int j = static_cast<int>(i) % toy.samples_per_class;
      char name[64];
      std::snprintf(name, sizeof(name), "shape_c%02d_s%04d.xyz", c, j);
      save_cloud_xyz(clouds[i], (fs::path(out_dir) / name).string());
      ++written;
    }
    std::cout << "wrote " << written << " cloud files to " << out_dir << "\n";
    return 0;
  }
  if (kind == "sequences") {
    require_known_keys(cfg, {"width", "height", "frames", "fx", "fy", "min_primitives", "max_primitives", "count"});
    DepthSceneConfig scene;
    scene.width = static_cast<int>(get_int(cfg, "width", scene.width));
    scene.height = static_cast<int>(get_int(cfg, "height", scene.height));
    scene.frames = static_cast<int>(get_int(cfg, "frames", scene.frames));
    scene.fx = get_double(cfg, "fx", scene.fx);
    scene.fy = get_double(cfg, "fy", scene.fy);
    scene.min_primitives = static_cast<int>(get_int(cfg, "min_primitives", scene.min_primitives));
    scene.max_primitives = static_cast<int>(get_int(cfg, "max_primitives", scene.max_primitives));
    const int count = static_cast<int>(get_int(cfg, "count", 1));

    RngStream root(seed);
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "seq_%03d", i);
      save_depth_sequence(generate_depth_sequence(root.child(static_cast<std::uint64_t>(i)), scene),
                          (fs::path(out_dir) / name).string());
    }
    std::cout << "wrote " << count << " depth sequences to " << out_dir << "\n";
    return 0;
  }
  throw ConfigError("gen-data: unknown kind '" + kind + "' (expected shapes or sequences)");
}

int run_pretrain_cmd(const std::string& config_path, const std::string& out_dir, bool seed_given,
                     std::uint64_t seed) {
  ConfigMap cfg = parse_config_file(config_path);
  if (seed_given) cfg["seed"] = std::to_string(seed);
  const TrainSetup setup = resolve_train_setup(cfg);
  const PretrainResult result = run_pretrain(setup, out_dir);
  std::cout << "checkpoint: " << result.checkpoint_path << "\n";
  std::cout << "metrics: " << result.metrics_path << "\n";
  return 0;
}

int run_embed(const std::string& checkpoint_path, const std::string& data_dir, const std::string& out_path,
              int points, std::uint64_t seed) {
  const LoadedCheckpoint ckpt = load_encoder_checkpoint(checkpoint_path);
  const bool normalize = get_bool(ckpt.config, "normalize", true);
  const std::vector<PointCloud> clouds = load_cloud_dir(data_dir);
  const FeatureSet fs = extract_features(ckpt.encoder, clouds, points, RngStream(seed), normalize);
  export_embeddings(fs, out_path);
  std::cout << "wrote " << fs.count() << " embeddings to " << out_path << "\n";
  return 0;
}

int run_probe(const std::string& train_emb, const std::string& test_emb, const std::string& checkpoint_path,
              const std::string& train_dir, const std::string& test_dir, double fraction, int points,
              bool fine_tune_encoder, int ft_steps, double ft_lr, std::uint64_t seed) {
  double accuracy = 0.0;
  if (!train_emb.empty()) {
    if (fine_tune_encoder) throw ConfigError("probe: --fine-tune needs --checkpoint and cloud directories");
    if (test_emb.empty()) throw ConfigError("probe: --test-embeddings is required with --train-embeddings");
    FeatureSet train = import_embeddings(train_emb);
    const FeatureSet test = import_embeddings(test_emb);
    if (fraction < 1.0) {
      RngStream rng = RngStream(seed).child(2);
      train = subset_features(train, semi_supervised_subset(train.labels, train.class_count, fraction, rng));
    }
    accuracy = evaluate(train_linear_probe(train), test);
  } else {
    if (checkpoint_path.empty() || train_dir.empty() || test_dir.empty())
      throw ConfigError("probe: need either --train-embeddings/--test-embeddings or --checkpoint with "
                        "--train-data/--test-data");
    const LoadedCheckpoint ckpt = load_encoder_checkpoint(checkpoint_path);
    const bool normalize = get_bool(ckpt.config, "normalize", true);
    if (fine_tune_encoder) {
      std::vector<PointCloud> train_clouds = load_cloud_dir(train_dir);
      const std::vector<PointCloud> test_clouds = load_cloud_dir(test_dir);
      int class_count = 0;
      for (const auto& c : train_clouds) class_count = std::max(class_count, c.label + 1);
      RngStream root(seed);
      if (fraction < 1.0) {
        std::vector<int> labels;
        for (const auto& c : train_clouds) labels.push_back(c.label);
        RngStream subset_rng = root.child(2);
        std::vector<PointCloud> kept;
        for (int i : semi_supervised_subset(labels, class_count, fraction, subset_rng))
          kept.push_back(train_clouds[static_cast<std::size_t>(i)]);
        train_clouds = std::move(kept);
      }
      FineTuneConfig ft;
      ft.steps = ft_steps;
      ft.lr = ft_lr;
      ft.normalize = normalize;
      ft.seed = root.child(3).origin();
      const auto model = fine_tune(ckpt.encoder, train_clouds, class_count, ft);
      accuracy = evaluate_fine_tuned(model, test_clouds, points, normalize, root.child(4));
    } else {
      accuracy = probe_encoder(ckpt.encoder, load_cloud_dir(train_dir), load_cloud_dir(test_dir), points, normalize,
                               seed, fraction)
                     .accuracy;
    }
  }
  std::printf("accuracy=%.6f\n", accuracy);
  return 0;
}

int run_augment_preview(const std::string& in_path, const std::string& out_path, int target_points, bool normalize,
                        std::uint64_t seed) {
  AugmentationConfig cfg;
  cfg.target_points = target_points;
  cfg.normalize = normalize;
  RngStream rng(seed);
  save_cloud(apply_pipeline(load_cloud(in_path), rng, cfg), out_path);
  std::cout << "wrote augmented cloud to " << out_path << "\n";
  return 0;
}

int run_grad_check(int trials, double step, double tol, std::uint64_t seed) {
  const GradientSuiteResult result = run_gradient_suite(seed, trials, step, tol);
  for (const auto& op : result.ops) {
    std::printf("%-34s max_rel_err=%.3e %s\n", op.name.c_str(), op.max_rel_error, op.pass ? "ok" : "FAIL");
  }
  if (!result.all_pass) {
    std::fprintf(stderr, "grad-check: at least one operation exceeded tolerance %.1e\n", tol);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised point-cloud representation learning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 42;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Master random seed (default 42)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate procedural shapes or depth sequences");
  std::string gen_kind = "shapes", gen_out, gen_config;
  gen->add_option("--kind", gen_kind, "shapes | sequences");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--config", gen_config, "Generator config file");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Run the self-supervised training loop");
  std::string pre_config, pre_out;
  pre->add_option("--config", pre_config, "Training config file")->required();
  pre->add_option("--out", pre_out, "Output directory for checkpoint and metrics")->required();

  // embed
  auto* emb = app.add_subcommand("embed", "Export embeddings for a cloud directory");
  std::string emb_ckpt, emb_data, emb_out;
  int emb_points = 512;
  emb->add_option("--checkpoint", emb_ckpt, "Encoder checkpoint")->required();
  emb->add_option("--data", emb_data, "Directory of .xyz/.pcb clouds")->required();
  emb->add_option("--out", emb_out, "Embedding file to write")->required();
  emb->add_option("--points", emb_points, "Points sampled per shape (default 512)");

  // probe
  auto* prb = app.add_subcommand("probe", "Linear probe on frozen features");
  std::string prb_train_emb, prb_test_emb, prb_ckpt, prb_train_dir, prb_test_dir;
  double prb_fraction = 1.0;
  int prb_points = 512;
  prb->add_option("--train-embeddings", prb_train_emb, "Training embeddings file");
  prb->add_option("--test-embeddings", prb_test_emb, "Test embeddings file");
  prb->add_option("--checkpoint", prb_ckpt, "Encoder checkpoint (with --train-data/--test-data)");
  prb->add_option("--train-data", prb_train_dir, "Training cloud directory");
  prb->add_option("--test-data", prb_test_dir, "Test cloud directory");
  prb->add_option("--fraction", prb_fraction, "Labeled fraction of the training split (default 1.0)");
  prb->add_option("--points", prb_points, "Points sampled per shape (default 512)");
  bool prb_fine_tune = false;
  int prb_ft_steps = 300;
  double prb_ft_lr = 0.02;
  prb->add_flag("--fine-tune", prb_fine_tune, "Unfreeze the encoder and train it with a cross-entropy head");
  prb->add_option("--ft-steps", prb_ft_steps, "Fine-tuning steps (default 300)");
  prb->add_option("--ft-lr", prb_ft_lr, "Fine-tuning learning rate (default 0.02)");

  // augment-preview
  auto* aug = app.add_subcommand("augment-preview", "Run the augmentation pipeline on one cloud");
  std::string aug_in, aug_out;
  int aug_points = 128;
  bool aug_no_normalize = false;
  aug->add_option("--in", aug_in, "Input cloud (.xyz or .pcb)")->required();
  aug->add_option("--out", aug_out, "Output cloud")->required();
  aug->add_option("--target-points", aug_points, "Pipeline output size (default 128)");
  aug->add_flag("--no-normalize", aug_no_normalize, "Skip unit-sphere normalization");

  // grad-check
  auto* grd = app.add_subcommand("grad-check", "Finite-difference check of every differentiable op");
  int grd_trials = 100;
  double grd_step = 1e-5, grd_tol = 1e-4;
  grd->add_option("--trials", grd_trials, "Random instances per op (default 100)");
  grd->add_option("--step", grd_step, "Central-difference step (default 1e-5)");
  grd->add_option("--tol", grd_tol, "Relative-error tolerance (default 1e-4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(gen)) return run_gen_data(gen_kind, gen_out, gen_config, seed);
    if (app.got_subcommand(pre)) return run_pretrain_cmd(pre_config, pre_out, seed_opt->count() > 0, seed);
    if (app.got_subcommand(emb)) return run_embed(emb_ckpt, emb_data, emb_out, emb_points, seed);
    if (app.got_subcommand(prb))
      return run_probe(prb_train_emb, prb_test_emb, prb_ckpt, prb_train_dir, prb_test_dir, prb_fraction, prb_points,
                       prb_fine_tune, prb_ft_steps, prb_ft_lr, seed);
    if (app.got_subcommand(aug)) return run_augment_preview(aug_in, aug_out, aug_points, !aug_no_normalize, seed);
    if (app.got_subcommand(grd)) return run_grad_check(grd_trials, grd_step, grd_tol, seed);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
