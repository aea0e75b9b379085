// Command-line entry point: dataset synthesis, training, and evaluation.
//
// Commands:
//   selfdepth synth      --config PATH [--seed N] [--out DIR]
//   selfdepth train      --config PATH [--checkpoint DIR] [--domain D] [--seed N]
//   selfdepth eval-depth --config PATH --checkpoint DIR [--domain D] [--split S] [--out DIR]
//   selfdepth eval-feat  --config PATH --checkpoint DIR [--domain D] [--split S] [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 checkpoint/architecture
// error, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "selfdepth/config.hpp"
#include "selfdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace selfdepth;

namespace {

struct CliArgs {
  std::string command;
  std::string config_path;
  std::string checkpoint;
  std::string domain;  // day | night | all (empty: use config)
  std::string split = "val";
  std::string out;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

CliArgs parse_args(int argc, char** argv) {
  CliArgs a;
  if (argc < 2) throw ConfigError("usage: selfdepth <synth|train|eval-depth|eval-feat> [flags]");
  a.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    std::string flag = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) throw ConfigError("flag " + flag + " needs a value");
      return argv[++i];
    };
    if (flag == "--config") a.config_path = next();
    else if (flag == "--checkpoint") a.checkpoint = next();
    else if (flag == "--domain") a.domain = next();
    else if (flag == "--split") a.split = next();
    else if (flag == "--out") a.out = next();
    else if (flag == "--seed") {
      a.seed = std::stoull(next());
      a.has_seed = true;
    } else throw ConfigError("unknown flag: " + flag);
  }
  if (!a.domain.empty() && a.domain != "day" && a.domain != "night" && a.domain != "all")
    throw ConfigError("bad --domain (day|night|all): " + a.domain);
  if (a.split != "train" && a.split != "val")
    throw ConfigError("bad --split (train|val): " + a.split);
  return a;
}

std::vector<SceneOnDisk> load_split(const RunConfig& cfg, const std::string& split,
                                    const std::string& domain) {
  require_path(cfg.data_path, "paths.data");
  if (!fs::exists(cfg.data_path + "/manifest.txt"))
    throw ConfigError("no dataset manifest under paths.data: " + cfg.data_path);
  DatasetLayout layout = read_dataset_layout(cfg.data_path);
  const auto& dirs = split == "train" ? layout.train_dirs : layout.val_dirs;
  std::vector<SceneOnDisk> scenes;
  for (const auto& rel : dirs) {
    SceneOnDisk s = read_scene_dir(cfg.data_path + "/" + rel);
    const char* d = domain_name(s.domain);
    if (domain == "all" || domain == d) scenes.push_back(std::move(s));
  }
  if (scenes.empty())
    throw ConfigError("no scenes in split '" + split + "' for domain '" + domain + "'");
  return scenes;
}

void check_architecture(const CheckpointInfo& info, const RunConfig& cfg) {
  if (info.enable_feat != cfg.flags.enable_feat ||
      (info.enable_feat && info.feature_dim != cfg.feature_dim) ||
      info.height != cfg.height || info.width != cfg.width)
    throw CheckpointError("checkpoint architecture does not match configuration");
}

int cmd_synth(const CliArgs& args, RunConfig cfg) {
  if (!args.out.empty()) cfg.data_path = args.out;
  if (args.has_seed) cfg.synth_seed = args.seed;
  require_path(cfg.data_path, "paths.data");
  DatasetLayout layout = generate_dataset(
      cfg.data_path, cfg.synth_seed, cfg.synth_train_scenes, cfg.synth_val_scenes,
      cfg.synth_overwrite, cfg.height, cfg.width, cfg.synth_frames);
  std::cout << "dataset written to " << cfg.data_path << "\n"
            << "train scenes: " << layout.train_dirs.size()
            << " (day+night twins)\n"
            << "val scenes:   " << layout.val_dirs.size() << "\n"
            << "manifest:     " << cfg.data_path << "/manifest.txt\n";
  return 0;
}

int cmd_train(const CliArgs& args, RunConfig cfg) {
  if (args.has_seed) cfg.seed = args.seed;
  if (!args.out.empty()) cfg.output_path = args.out;
  std::string domain = args.domain.empty() ? cfg.train_domain : args.domain;
  require_path(cfg.checkpoints_path, "paths.checkpoints");
  require_path(cfg.output_path, "paths.output");
  std::vector<SceneOnDisk> scenes = load_split(cfg, "train", domain);

  Trainer trainer(cfg.trainer_config(), std::move(scenes));
  if (!args.checkpoint.empty()) {
    CheckpointInfo info = read_checkpoint_info(args.checkpoint);
    check_architecture(info, cfg);
    load_checkpoint(args.checkpoint, trainer.models(), &trainer.optimizer());
    std::cout << "resumed from " << args.checkpoint << " at step " << info.step
              << "\n";
  }
  fs::create_directories(cfg.output_path);
  std::ofstream log(cfg.output_path + "/loss_log.txt",
                    trainer.step() > 0 ? std::ios::app : std::ios::trunc);
  if (trainer.step() == 0) log << "step,loss_total,loss_P,loss_F,loss_C,loss_S\n";
  trainer.train(cfg.steps, log);
  save_checkpoint(cfg.checkpoints_path, trainer.models(), trainer.optimizer(),
                  trainer.step(), cfg.height, cfg.width, cfg.feature_dim,
                  cfg.flags.enable_feat);
  std::cout << "trained to step " << trainer.step() << ", checkpoint at "
            << cfg.checkpoints_path << "\n";
  return 0;
}

int cmd_eval_depth(const CliArgs& args, RunConfig cfg) {
  if (!args.out.empty()) cfg.output_path = args.out;
  require_path(cfg.output_path, "paths.output");
  if (args.checkpoint.empty()) throw CheckpointError("eval-depth needs --checkpoint");
  std::string domain = args.domain.empty() ? "all" : args.domain;
  std::vector<SceneOnDisk> scenes = load_split(cfg, args.split, domain);

  CheckpointInfo info = read_checkpoint_info(args.checkpoint);
  check_architecture(info, cfg);
  Models models(cfg.seed, cfg.flags.enable_feat, cfg.feature_dim);
  load_checkpoint(args.checkpoint, models, nullptr);

  fs::create_directories(cfg.output_path);
  DepthEvalResult result =
      eval_depth(models, scenes, cfg.median_scale, cfg.output_path + "/depth_vis");
  const std::string csv = depth_csv(result);
  std::ofstream f(cfg.output_path + "/depth_metrics.csv");
  f << csv;
  std::cout << csv;
  return 0;
}

int cmd_eval_feat(const CliArgs& args, RunConfig cfg) {
  if (!args.out.empty()) cfg.output_path = args.out;
  require_path(cfg.output_path, "paths.output");
  if (args.checkpoint.empty()) throw CheckpointError("eval-feat needs --checkpoint");
  if (args.has_seed) cfg.seed = args.seed;
  std::string domain = args.domain.empty() ? "all" : args.domain;
  std::vector<SceneOnDisk> scenes = load_split(cfg, args.split, domain);

  CheckpointInfo info = read_checkpoint_info(args.checkpoint);
  if (!info.enable_feat)
    throw CheckpointError("checkpoint was trained without FeatNet");
  check_architecture(info, cfg);
  Models models(cfg.seed, /*enable_feat=*/true, cfg.feature_dim);
  load_checkpoint(args.checkpoint, models, nullptr);

  FeatureMetrics metrics =
      eval_features(models, scenes, cfg.eval_negatives, cfg.seed);
  const std::string csv = feature_csv(metrics);
  fs::create_directories(cfg.output_path);
  std::ofstream f(cfg.output_path + "/feat_metrics.csv");
  f << csv;
  std::cout << csv;
  return 0;
}

int run(int argc, char** argv) {
  CliArgs args = parse_args(argc, argv);
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
  if (args.command == "synth") return cmd_synth(args, cfg);
  if (args.command == "train") return cmd_train(args, cfg);
  if (args.command == "eval-depth") return cmd_eval_depth(args, cfg);
  if (args.command == "eval-feat") return cmd_eval_feat(args, cfg);
  throw ConfigError("unknown command: " + args.command);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
