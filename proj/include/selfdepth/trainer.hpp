#pragma once

// Assembles the training objective: network forwards, correspondence maps,
// warps, minimum-reprojection fusion, automasking, contrastive labels, and
// the per-scale loss combination. Also owns checkpointing, the training loop
// and the evaluation drivers used by the CLI.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "selfdepth/camera.hpp"
#include "selfdepth/losses.hpp"
#include "selfdepth/maskfilter.hpp"
#include "selfdepth/metrics.hpp"
#include "selfdepth/nets.hpp"
#include "selfdepth/synthscene.hpp"
#include "selfdepth/tensor.hpp"
#include "selfdepth/warp.hpp"

namespace selfdepth {

struct LossWeights {
  double alpha = 0.85;        // SSIM/L1 mix
  double lambda = 0.001;      // smoothness scale
  double margin = 0.5;        // contrastive margin
  double w_photo = 1.0, w_feat = 1.0, w_contrastive = 1.0;
};

struct MiningConfig {
  MiningStrategy strategy = MiningStrategy::kGlobal;
  int ratio = 4;
  double exclusion_radius = 3.0;
};

struct TrainFlags {
  bool enable_feat = true;
  bool automask = true;
  bool min_reprojection = true;
};

struct StepLosses {
  double total = 0, photo = 0, feat = 0, contrastive = 0, smooth = 0;
};

// ---------------------------------------------------------------------------
// Per-scale loss core

struct ScaleFeatures {
  Tensor target, prev, next;  // L2-normalized feature maps, full resolution
};

struct ScaleLossResult {
  Tensor photo = Tensor::scalar(0);
  Tensor feat = Tensor::scalar(0);
  Tensor contrastive = Tensor::scalar(0);
  Tensor smooth = Tensor::scalar(0);
};

/// Losses for one full-resolution depth hypothesis. Per-pixel photometric
/// errors against both supports are fused by minimum reprojection (gradient
/// through the selected branch only); the automask and the selection also
/// gate the feature warp error and relabel contrastive positives to ignore.
/// Invalid (out-of-bounds) pixels never contribute, and masking never
/// increases the objective: losses divide by the count of valid pixels, not
/// of kept ones.
inline ScaleLossResult compute_scale_losses(
    const SceneSample& sample, const DepthMap& depth, const Pose& pose_prev,
    const Pose& pose_next, const std::optional<ScaleFeatures>& features,
    const LossWeights& weights, const MiningConfig& mining,
    const TrainFlags& flags, std::uint64_t mining_seed) {
  constexpr double kBigError = 1e6;
  const Intrinsics& k = sample.intrinsics;
  ScaleLossResult out;

  CorrespondenceMap cm_prev = correspondence_map(depth, pose_prev, k);
  CorrespondenceMap cm_next = correspondence_map(depth, pose_next, k);
  WarpResult wp = bilinear_sample(sample.prev, cm_prev);
  WarpResult wn = bilinear_sample(sample.next, cm_next);

  Tensor err_prev = warp_cost_map(sample.target, wp.warped, weights.alpha);
  Tensor err_next = warp_cost_map(sample.target, wn.warped, weights.alpha);
  // push invalid pixels out of the minimum
  Tensor inv_prev = 1.0 - wp.validity;
  Tensor inv_next = 1.0 - wn.validity;
  Tensor adj_prev = err_prev * wp.validity + kBigError * inv_prev;
  Tensor adj_next = err_next * wn.validity + kBigError * inv_next;

  Tensor fused, chosen_k;
  Tensor valid = maximum(wp.validity, wn.validity);  // constants
  if (flags.min_reprojection) {
    PixelSelection sel = min_reprojection(adj_prev, adj_next);
    fused = sel.fused;
    chosen_k = sel.chosen_k;
  } else {
    // no selection: average both branches over pixels valid in both
    fused = 0.5 * (adj_prev + adj_next);
    valid = minimum(wp.validity, wn.validity);
    chosen_k = Tensor::zeros(valid.shape());  // no branch filtering
  }

  Tensor mu = flags.automask
                  ? automask(sample.target, sample.prev, sample.next, wp.warped,
                             wn.warped, weights.alpha)
                  : Tensor::full(valid.shape(), 1.0);

  bool warn = false;
  out.photo = masked_mean(fused * mu, valid, &warn);

  if (features) {
    WarpResult wfp = bilinear_sample(features->prev, cm_prev);
    WarpResult wfn = bilinear_sample(features->next, cm_next);
    Tensor ferr_prev = warp_cost_map(features->target, wfp.warped, weights.alpha);
    Tensor ferr_next = warp_cost_map(features->target, wfn.warped, weights.alpha);
    Tensor f_fused;
    if (flags.min_reprojection) {
      // select the branch chosen by the photometric error
      Tensor pick_prev = Tensor::zeros(chosen_k.shape());
      double* pp = pick_prev.mutable_data();
      const double* pk = chosen_k.data();
      for (std::int64_t i = 0; i < chosen_k.size(); ++i)
        pp[i] = pk[i] < 0 ? 1.0 : 0.0;
      f_fused = ferr_prev * pick_prev + ferr_next * (1.0 - pick_prev);
    } else {
      f_fused = 0.5 * (ferr_prev + ferr_next);
    }
    out.feat = masked_mean(f_fused * mu, valid, &warn);

    Tensor contrastive_total = Tensor::scalar(0);
    int k_index = 0;
    for (int support_k : {-1, +1}) {
      const CorrespondenceMap& cm = support_k < 0 ? cm_prev : cm_next;
      const Tensor& f_support = support_k < 0 ? features->prev : features->next;
      LabelMask labels =
          mine_negatives(cm, mining.strategy, mining.ratio,
                         mining.exclusion_radius,
                         derive_seed(mining_seed, 11 + k_index));
      if (flags.min_reprojection || flags.automask) {
        Tensor keep_k = flags.min_reprojection
                            ? chosen_k
                            : Tensor::full(chosen_k.shape(),
                                           static_cast<double>(support_k));
        filter_labels(labels, keep_k, support_k, mu);
      }
      bool cwarn = false;
      contrastive_total = contrastive_total +
                          pixelwise_contrastive(features->target, f_support,
                                                labels, weights.margin, &cwarn);
      ++k_index;
    }
    out.contrastive = contrastive_total * 0.5;
  }

  out.smooth = smoothness_loss(depth.values, sample.target, weights.lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Full sample loss over the four disparity scales

struct SampleLossResult {
  Tensor total = Tensor::scalar(0);
  StepLosses values;
};

struct Models {
  explicit Models(std::uint64_t seed, bool enable_feat, int feature_dim)
      : disp(seed), pose(seed) {
    if (enable_feat) feat.emplace(seed, feature_dim);
  }
  DispNetModel disp;
  PoseNetModel pose;
  std::optional<FeatNetModel> feat;

  ParamList parameters() const {
    ParamList out = disp.parameters();
    for (auto& p : pose.parameters()) out.push_back(p);
    if (feat)
      for (auto& p : feat->parameters()) out.push_back(p);
    return out;
  }
};

/// Forward all networks on one sample and combine per-scale losses: every
/// scale's disparity is upsampled to full resolution, the full loss is
/// computed there, and scales are averaged equally.
inline SampleLossResult compute_sample_losses(const Models& models,
                                              const SceneSample& sample,
                                              const LossWeights& weights,
                                              const MiningConfig& mining,
                                              const TrainFlags& flags,
                                              std::uint64_t step_seed) {
  const int h = sample.target.dim(2), w = sample.target.dim(3);
  std::array<Tensor, 4> disps = models.disp.forward(sample.target);
  Pose pose_prev = models.pose.forward(sample.target, sample.prev);
  Pose pose_next = models.pose.forward(sample.target, sample.next);
  std::optional<ScaleFeatures> features;
  if (flags.enable_feat && models.feat) {
    features = ScaleFeatures{models.feat->forward(sample.target),
                             models.feat->forward(sample.prev),
                             models.feat->forward(sample.next)};
  }

  SampleLossResult out;
  Tensor total = Tensor::scalar(0);
  for (int s = 0; s < 4; ++s) {
    Tensor disp_full = s == 0 ? disps[0] : resize_bilinear(disps[s], h, w);
    DepthMap depth = disp_to_depth(disp_full);
    ScaleLossResult r = compute_scale_losses(
        sample, depth, pose_prev, pose_next, features, weights, mining, flags,
        derive_seed(step_seed, 700 + s));
    Tensor scale_total = weights.w_photo * r.photo + r.smooth;
    if (features)
      scale_total = scale_total + weights.w_feat * r.feat +
                    weights.w_contrastive * r.contrastive;
    total = total + scale_total;
    out.values.photo += r.photo.at(0) / 4.0;
    out.values.feat += r.feat.at(0) / 4.0;
    out.values.contrastive += r.contrastive.at(0) / 4.0;
    out.values.smooth += r.smooth.at(0) / 4.0;
  }
  out.total = total / 4.0;
  out.values.total = out.total.at(0);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: tensor-core binaries plus a manifest of layer names and shapes

inline void save_checkpoint(const std::string& dir, const Models& models,
                            const AdamOptimizer& opt, std::int64_t step,
                            int height, int width, int feature_dim,
                            bool enable_feat) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/params");
  fs::create_directories(dir + "/opt");
  KeyValueMap kv;
  kv["step"] = std::to_string(step);
  kv["height"] = std::to_string(height);
  kv["width"] = std::to_string(width);
  kv["feature_dim"] = std::to_string(feature_dim);
  kv["enable_feat"] = enable_feat ? "true" : "false";
  kv["optimizer"] = "adam";
  kv["opt.t"] = std::to_string(opt.step_count());
  ParamList params = models.parameters();
  for (const auto& [name, t] : params) {
    std::string shape;
    for (int i = 0; i < t.rank(); ++i) {
      shape += std::to_string(t.dim(i));
      if (i + 1 < t.rank()) shape += " ";
    }
    kv["param." + name] = shape;
    save_tensor(t, dir + "/params/" + name + ".dft");
  }
  for (std::size_t i = 0; i < opt.names().size(); ++i) {
    const std::string& name = opt.names()[i];
    Tensor m1 = Tensor::from_data({static_cast<int>(opt.moment1(i).size())},
                                  opt.moment1(i));
    Tensor m2 = Tensor::from_data({static_cast<int>(opt.moment2(i).size())},
                                  opt.moment2(i));
    save_tensor(m1, dir + "/opt/" + name + ".m1.dft");
    save_tensor(m2, dir + "/opt/" + name + ".m2.dft");
  }
  write_manifest(kv, dir + "/manifest.txt");
}

struct CheckpointInfo {
  std::int64_t step = 0;
  int height = 0, width = 0, feature_dim = 0;
  bool enable_feat = false;
};

inline CheckpointInfo read_checkpoint_info(const std::string& dir) {
  if (!std::filesystem::exists(dir + "/manifest.txt"))
    throw CheckpointError("no checkpoint manifest under: " + dir);
  KeyValueMap kv = read_manifest(dir + "/manifest.txt");
  CheckpointInfo info;
  info.step = std::stoll(kv.at("step"));
  info.height = std::stoi(kv.at("height"));
  info.width = std::stoi(kv.at("width"));
  info.feature_dim = std::stoi(kv.at("feature_dim"));
  info.enable_feat = kv.at("enable_feat") == "true";
  return info;
}

/// Restores parameters (and optimizer moments when `opt` is given) in place.
/// Shape or name mismatches raise CheckpointError.
inline CheckpointInfo load_checkpoint(const std::string& dir, Models& models,
                                      AdamOptimizer* opt) {
  CheckpointInfo info = read_checkpoint_info(dir);
  KeyValueMap kv = read_manifest(dir + "/manifest.txt");
  ParamList params = models.parameters();
  for (auto& [name, t] : params) {
    auto it = kv.find("param." + name);
    if (it == kv.end())
      throw CheckpointError("checkpoint missing parameter: " + name);
    Tensor loaded = load_tensor(dir + "/params/" + name + ".dft");
    if (loaded.shape() != t.shape())
      throw CheckpointError("checkpoint shape mismatch for " + name);
    std::copy_n(loaded.data(), loaded.size(), t.mutable_data());
  }
  if (opt) {
    opt->set_step_count(std::stoll(kv.at("opt.t")));
    for (std::size_t i = 0; i < opt->names().size(); ++i) {
      const std::string& name = opt->names()[i];
      Tensor m1 = load_tensor(dir + "/opt/" + name + ".m1.dft");
      Tensor m2 = load_tensor(dir + "/opt/" + name + ".m2.dft");
      if (m1.size() != static_cast<std::int64_t>(opt->moment1(i).size()) ||
          m2.size() != static_cast<std::int64_t>(opt->moment2(i).size()))
        throw CheckpointError("checkpoint optimizer state mismatch for " + name);
      std::copy_n(m1.data(), m1.size(), opt->moment1(i).data());
      std::copy_n(m2.data(), m2.size(), opt->moment2(i).data());
    }
  }
  return info;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainerConfig {
  int steps = 2000;
  int batch_size = 1;
  double step_size = 1e-4;
  std::uint64_t seed = 7;
  LossWeights weights;
  MiningConfig mining;
  TrainFlags flags;
  int feature_dim = 16;
  std::string diagnostics_dir;  // for the non-finite-loss dump
};

class Trainer {
 public:
  Trainer(const TrainerConfig& cfg, std::vector<SceneOnDisk> scenes)
      : cfg_(cfg),
        scenes_(std::move(scenes)),
        models_(cfg.seed, cfg.flags.enable_feat, cfg.feature_dim),
        opt_(cfg.step_size) {
    if (scenes_.empty()) throw ConfigError("trainer: no training scenes");
    opt_.attach(models_.parameters());
  }

  Models& models() { return models_; }
  const Models& models() const { return models_; }
  AdamOptimizer& optimizer() { return opt_; }
  std::int64_t step() const { return opt_.step_count(); }

  /// Deterministic sample choice for a given step index and batch slot.
  SceneSample pick_sample(std::int64_t step_index, int slot) const {
    Rng rng(derive_seed(cfg_.seed, 0x5000 + static_cast<std::uint64_t>(step_index) * 64 +
                                       static_cast<std::uint64_t>(slot)));
    const auto& scene = scenes_[rng.uniform_int(static_cast<int>(scenes_.size()))];
    const int t = 1 + rng.uniform_int(scene.frames - 2);
    return load_sample(scene, t);
  }

  /// One optimization step; returns the batch-averaged loss values.
  StepLosses run_step() {
    const std::int64_t step_index = opt_.step_count();  // 0-based before update
    Tape tape;
    Tensor total = Tensor::scalar(0);
    StepLosses values;
    for (int b = 0; b < cfg_.batch_size; ++b) {
      SceneSample sample = pick_sample(step_index, b);
      SampleLossResult r = compute_sample_losses(
          models_, sample, cfg_.weights, cfg_.mining, cfg_.flags,
          derive_seed(cfg_.seed, 0x9000 + static_cast<std::uint64_t>(step_index) * 64 + b));
      total = total + r.total;
      values.total += r.values.total / cfg_.batch_size;
      values.photo += r.values.photo / cfg_.batch_size;
      values.feat += r.values.feat / cfg_.batch_size;
      values.contrastive += r.values.contrastive / cfg_.batch_size;
      values.smooth += r.values.smooth / cfg_.batch_size;
    }
    total = total / static_cast<double>(cfg_.batch_size);
    if (!std::isfinite(total.at(0))) {
      dump_diagnostics(step_index);
      throw NumericError("non-finite loss at step " + std::to_string(step_index));
    }
    tape.backward(total);
    opt_.step();
    return values;
  }

  /// Runs until the optimizer has taken `target_steps` steps, appending one
  /// log line per step: step,loss_total,loss_P,loss_F,loss_C,loss_S.
  void train(int target_steps, std::ostream& loss_log) {
    while (opt_.step_count() < target_steps) {
      StepLosses v = run_step();
      loss_log << opt_.step_count() << "," << fmt(v.total) << "," << fmt(v.photo)
               << "," << fmt(v.feat) << "," << fmt(v.contrastive) << ","
               << fmt(v.smooth) << "\n";
    }
  }

  static std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
  }

 private:
  void dump_diagnostics(std::int64_t step_index) const {
    if (cfg_.diagnostics_dir.empty()) return;
    namespace fs = std::filesystem;
    const std::string dir =
        cfg_.diagnostics_dir + "/diagnostic_step" + std::to_string(step_index);
    fs::create_directories(dir);
    for (int b = 0; b < cfg_.batch_size; ++b) {
      SceneSample s = pick_sample(step_index, b);
      const std::string tag = std::to_string(b);
      save_tensor(s.target, dir + "/target_" + tag + ".dft");
      save_tensor(s.prev, dir + "/prev_" + tag + ".dft");
      save_tensor(s.next, dir + "/next_" + tag + ".dft");
    }
  }

  TrainerConfig cfg_;
  std::vector<SceneOnDisk> scenes_;
  Models models_;
  AdamOptimizer opt_;
};

// ---------------------------------------------------------------------------
// Evaluation drivers

struct DepthEvalRow {
  std::string image;
  std::string domain;
  DepthMetrics metrics;
};

struct DepthEvalResult {
  std::vector<DepthEvalRow> rows;        // one per image
  std::vector<DepthEvalRow> aggregates;  // one per domain present
};

/// Runs DispNet on every frame of every scene, compares the full-resolution
/// depth against ground truth, and aggregates per domain tag.
inline DepthEvalResult eval_depth(const Models& models,
                                  const std::vector<SceneOnDisk>& scenes,
                                  bool median_scale,
                                  const std::string& vis_dir = "") {
  NoGrad ng;
  DepthEvalResult out;
  std::map<std::string, std::pair<DepthMetrics, int>> agg;
  for (const auto& scene : scenes) {
    for (int f = 0; f < scene.frames; ++f) {
      Tensor image = load_tensor(scene.dir + "/image_" + detail::frame_tag(f) + ".dft");
      Tensor gt = load_tensor(scene.dir + "/depth_" + detail::frame_tag(f) + ".dft");
      std::array<Tensor, 4> disps = models.disp.forward(image);
      DepthMap pred = disp_to_depth(disps[0]);
      DepthMetrics m = depth_metrics(pred, DepthMap{gt}, median_scale);
      DepthEvalRow row{scene.name + "/" + detail::frame_tag(f),
                       domain_name(scene.domain), m};
      out.rows.push_back(row);
      auto& [sum, count] = agg[row.domain];
      sum.abs_rel += m.abs_rel;
      sum.sq_rel += m.sq_rel;
      sum.rmse += m.rmse;
      sum.rmse_log += m.rmse_log;
      sum.a1 += m.a1;
      sum.a2 += m.a2;
      sum.a3 += m.a3;
      ++count;
      if (!vis_dir.empty()) {
        std::filesystem::create_directories(vis_dir);
        Tensor inv = 1.0 / pred.values;
        write_gray_ppm(inv, vis_dir + "/" + scene.name + "_" +
                                detail::frame_tag(f) + ".ppm");
      }
    }
  }
  for (auto& [domain, pair] : agg) {
    auto& [sum, count] = pair;
    DepthMetrics m{sum.abs_rel / count, sum.sq_rel / count,
                   sum.rmse / count,    sum.rmse_log / count,
                   sum.a1 / count,      sum.a2 / count,
                   sum.a3 / count};
    out.aggregates.push_back({"aggregate", domain, m});
  }
  return out;
}

inline std::string depth_csv(const DepthEvalResult& r) {
  std::ostringstream os;
  os << "image,domain,abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3\n";
  auto emit = [&](const DepthEvalRow& row) {
    os << row.image << "," << row.domain << "," << std::setprecision(9)
       << std::fixed << row.metrics.abs_rel << "," << row.metrics.sq_rel << ","
       << row.metrics.rmse << "," << row.metrics.rmse_log << ","
       << row.metrics.a1 << "," << row.metrics.a2 << "," << row.metrics.a3
       << "\n";
    os.unsetf(std::ios_base::fixed);
  };
  for (const auto& row : r.rows) emit(row);
  for (const auto& row : r.aggregates) emit(row);
  return os.str();
}

/// Feature metrics on (t, t+1) pairs with ground-truth correspondences from
/// the stored depth and poses; occluded pixels are excluded from positives.
inline FeatureMetrics eval_features(const Models& models,
                                    const std::vector<SceneOnDisk>& scenes,
                                    int n_negatives, std::uint64_t seed) {
  if (!models.feat) throw CheckpointError("feature evaluation without FeatNet");
  NoGrad ng;
  FeatureMetrics sum;
  int count = 0;
  for (const auto& scene : scenes) {
    for (int t = 1; t + 1 < scene.frames; ++t) {
      SceneSample s = load_sample(scene, t);
      Tensor f1 = models.feat->forward(s.target);
      Tensor f2 = models.feat->forward(s.next);
      CorrespondenceMap gt = correspondence_map(s.gt_depth, s.pose_next,
                                                s.intrinsics);
      FeatureMetrics m = feature_metrics(f1, f2, gt, s.occ_next, n_negatives,
                                         derive_seed(seed, 777 + count));
      sum.mu_pos += m.mu_pos;
      sum.mu_neg_global += m.mu_neg_global;
      sum.mu_neg_local += m.mu_neg_local;
      sum.auc_global += m.auc_global;
      sum.auc_local += m.auc_local;
      ++count;
    }
  }
  if (count == 0) throw EvalError("eval_features: no image pairs");
  sum.mu_pos /= count;
  sum.mu_neg_global /= count;
  sum.mu_neg_local /= count;
  sum.auc_global /= count;
  sum.auc_local /= count;
  return sum;
}

inline std::string feature_csv(const FeatureMetrics& m) {
  std::ostringstream os;
  os << "mu_pos,mu_neg_global,auc_global,mu_neg_local,auc_local\n"
     << std::setprecision(9) << std::fixed << m.mu_pos << ","
     << m.mu_neg_global << "," << m.auc_global << "," << m.mu_neg_local << ","
     << m.auc_local << "\n";
  return os.str();
}

}  // namespace selfdepth
