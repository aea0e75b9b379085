#pragma once

// Run configuration: line-oriented `section.key=value` text with built-in
// defaults. Unknown keys are rejected so typos fail loudly; missing required
// keys are reported by name.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "selfdepth/errors.hpp"
#include "selfdepth/trainer.hpp"

namespace selfdepth {

struct RunConfig {
  // paths
  std::string data_path;
  std::string checkpoints_path;
  std::string output_path;
  // resolution
  int height = 64, width = 96;
  // training
  int steps = 2000;
  int batch_size = 1;
  double step_size = 1e-4;
  std::uint64_t seed = 7;
  std::string train_domain = "day";  // day | night | all
  // losses
  LossWeights weights;
  // mining
  MiningConfig mining;
  // flags
  TrainFlags flags;
  bool median_scale = true;
  // featnet
  int feature_dim = 16;
  // synthesis
  int synth_train_scenes = 20;
  int synth_val_scenes = 4;
  int synth_frames = 5;
  std::uint64_t synth_seed = 1;
  bool synth_overwrite = false;
  // evaluation
  int eval_negatives = 8;

  TrainerConfig trainer_config() const {
    TrainerConfig t;
    t.steps = steps;
    t.batch_size = batch_size;
    t.step_size = step_size;
    t.seed = seed;
    t.weights = weights;
    t.mining = mining;
    t.flags = flags;
    t.feature_dim = feature_dim;
    t.diagnostics_dir = output_path;
    return t;
  }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + v);
  }
}

inline MiningStrategy parse_strategy(const std::string& v) {
  if (v == "global") return MiningStrategy::kGlobal;
  if (v == "local") return MiningStrategy::kLocal;
  if (v == "global-local") return MiningStrategy::kGlobalLocal;
  throw ConfigError("bad mining.strategy (global|local|global-local): " + v);
}

}  // namespace detail

inline void apply_config_entry(RunConfig& c, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  if (key == "paths.data") c.data_path = value;
  else if (key == "paths.checkpoints") c.checkpoints_path = value;
  else if (key == "paths.output") c.output_path = value;
  else if (key == "resolution.height") c.height = parse_int(key, value);
  else if (key == "resolution.width") c.width = parse_int(key, value);
  else if (key == "train.steps") c.steps = parse_int(key, value);
  else if (key == "train.batch_size") c.batch_size = parse_int(key, value);
  else if (key == "train.step_size") c.step_size = parse_double(key, value);
  else if (key == "train.seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "train.domain") {
    if (value != "day" && value != "night" && value != "all")
      throw ConfigError("bad train.domain (day|night|all): " + value);
    c.train_domain = value;
  } else if (key == "loss.alpha") c.weights.alpha = parse_double(key, value);
  else if (key == "loss.lambda") c.weights.lambda = parse_double(key, value);
  else if (key == "loss.margin") c.weights.margin = parse_double(key, value);
  else if (key == "loss.w_photo") c.weights.w_photo = parse_double(key, value);
  else if (key == "loss.w_feat") c.weights.w_feat = parse_double(key, value);
  else if (key == "loss.w_contrastive") c.weights.w_contrastive = parse_double(key, value);
  else if (key == "mining.strategy") c.mining.strategy = detail::parse_strategy(value);
  else if (key == "mining.ratio") c.mining.ratio = parse_int(key, value);
  else if (key == "mining.exclusion_radius") c.mining.exclusion_radius = parse_double(key, value);
  else if (key == "flags.enable_feat") c.flags.enable_feat = parse_bool(key, value);
  else if (key == "flags.automask") c.flags.automask = parse_bool(key, value);
  else if (key == "flags.min_reprojection") c.flags.min_reprojection = parse_bool(key, value);
  else if (key == "flags.median_scale") c.median_scale = parse_bool(key, value);
  else if (key == "feat.dim") c.feature_dim = parse_int(key, value);
  else if (key == "synth.train_scenes") c.synth_train_scenes = parse_int(key, value);
  else if (key == "synth.val_scenes") c.synth_val_scenes = parse_int(key, value);
  else if (key == "synth.frames") c.synth_frames = parse_int(key, value);
  else if (key == "synth.seed") c.synth_seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "synth.overwrite") c.synth_overwrite = parse_bool(key, value);
  else if (key == "eval.negatives") c.eval_negatives = parse_int(key, value);
  else throw ConfigError("unknown configuration key: " + key);
}

inline void validate_config(const RunConfig& c) {
  if (c.height <= 0 || c.width <= 0 || c.height % 8 || c.width % 8)
    throw ConfigError("resolution must be positive and divisible by 8");
  if (c.steps < 0 || c.batch_size < 1) throw ConfigError("bad training.steps/batch_size");
  if (c.weights.alpha < 0 || c.weights.alpha > 1)
    throw ConfigError("loss.alpha must be in [0,1]");
  if (c.weights.margin <= 0) throw ConfigError("loss.margin must be positive");
  if (c.weights.w_photo < 0 || c.weights.w_feat < 0 || c.weights.w_contrastive < 0)
    throw ConfigError("loss weights must be nonnegative");
  if (c.mining.ratio < 1) throw ConfigError("mining.ratio must be >= 1");
  if (c.feature_dim < 2) throw ConfigError("feat.dim must be >= 2");
}

inline RunConfig parse_config_text(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments and whitespace
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    apply_config_entry(c, line.substr(0, eq), line.substr(eq + 1));
  }
  validate_config(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  return parse_config_text(f);
}

/// Fails with the key name when a required path is missing.
inline void require_path(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required configuration key: " + key);
}

}  // namespace selfdepth
