#pragma once

// Evaluation protocols: depth error and inlier-ratio metrics with optional
// per-image median scaling, and feature-space distance metrics (positive /
// negative mean distances and AUC, global and within a 25-pixel window).

#include <algorithm>
#include <cmath>
#include <vector>

#include "selfdepth/camera.hpp"
#include "selfdepth/tensor.hpp"

namespace selfdepth {

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double a1 = 0, a2 = 0, a3 = 0;
};

namespace detail {
inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Standard depth metrics over pixels with positive ground truth. With
/// median_scale the prediction is first rescaled by median(gt)/median(pred).
inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                  bool median_scale) {
  if (pred.values.shape() != gt.values.shape())
    throw ShapeError("depth_metrics: shape mismatch");
  std::vector<double> p, g;
  const double* pp = pred.values.data();
  const double* pg = gt.values.data();
  for (std::int64_t i = 0; i < gt.values.size(); ++i) {
    if (pg[i] > 0) {
      p.push_back(pp[i]);
      g.push_back(pg[i]);
    }
  }
  if (p.empty()) throw EvalError("depth_metrics: no valid ground-truth pixels");
  if (median_scale) {
    const double s = detail::median_of(g) / detail::median_of(p);
    for (double& v : p) v *= s;
  }
  DepthMetrics m;
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - g[i];
    m.abs_rel += std::fabs(d) / g[i];
    m.sq_rel += d * d / g[i];
    m.rmse += d * d;
    const double dl = std::log(p[i]) - std::log(g[i]);
    m.rmse_log += dl * dl;
    const double r = std::max(p[i] / g[i], g[i] / p[i]);
    if (r < 1.25) m.a1 += 1;
    if (r < 1.5625) m.a2 += 1;
    if (r < 1.953125) m.a3 += 1;
  }
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = std::sqrt(m.rmse_log / n);
  m.a1 /= n;
  m.a2 /= n;
  m.a3 /= n;
  return m;
}

// ---------------------------------------------------------------------------
// Feature metrics

struct FeatureMetrics {
  double mu_pos = 0;
  double mu_neg_global = 0, mu_neg_local = 0;
  double auc_global = 0, auc_local = 0;
};

inline constexpr int kFeatureLocalWindow = 25;  // Chebyshev radius, pixels

namespace detail {
inline double feature_distance(const Tensor& f1, const Tensor& f2, int y1,
                               int x1, int y2, int x2) {
  const int c = f1.dim(1), h = f1.dim(2), w = f1.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const double* p1 = f1.data() + static_cast<std::int64_t>(y1) * w + x1;
  const double* p2 = f2.data() + static_cast<std::int64_t>(y2) * w + x2;
  double d2 = 0;
  for (int ch = 0; ch < c; ++ch) {
    const double d = p1[ch * hw] - p2[ch * hw];
    d2 += d * d;
  }
  return std::sqrt(d2);
}
}  // namespace detail

/// Positive distances come from the (rounded) ground-truth correspondences;
/// negatives are sampled per positive, globally over the support image and
/// locally within the 25-pixel window, both excluding the true match pixel.
/// AUC counts comparisons where the negative distance exceeds the positive
/// one, ties scoring one half.
inline FeatureMetrics feature_metrics(const Tensor& f1, const Tensor& f2,
                                      const CorrespondenceMap& gt,
                                      const Tensor& occluded,
                                      int n_negatives, std::uint64_t seed) {
  if (n_negatives < 1) throw EvalError("feature_metrics: n_negatives must be >= 1");
  const int h = f1.dim(2), w = f1.dim(3);
  if (gt.height != h || gt.width != w)
    throw ShapeError("feature_metrics: correspondence map size mismatch");
  if (h * w < 2) throw EvalError("feature_metrics: image too small for negatives");
  Rng rng(seed);
  const double* pu = gt.coords.data();
  const double* pv = pu + static_cast<std::int64_t>(h) * w;
  const double* pb = gt.in_bounds.data();
  const double* pocc = occluded.defined() ? occluded.data() : nullptr;

  FeatureMetrics m;
  std::int64_t n_pos = 0, n_neg_g = 0, n_neg_l = 0;
  double auc_g = 0, auc_l = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (pb[i] < 0.5) continue;
      if (pocc && pocc[i] > 0.5) continue;
      const int cu = static_cast<int>(std::lround(pu[i]));
      const int cv = static_cast<int>(std::lround(pv[i]));
      const double d_pos = detail::feature_distance(f1, f2, y, x, cv, cu);
      m.mu_pos += d_pos;
      ++n_pos;
      for (int n = 0; n < n_negatives; ++n) {  // global
        int sy, sx;
        do {
          sy = rng.uniform_int(h);
          sx = rng.uniform_int(w);
        } while (sy == cv && sx == cu);
        const double d = detail::feature_distance(f1, f2, y, x, sy, sx);
        m.mu_neg_global += d;
        ++n_neg_g;
        auc_g += d > d_pos ? 1.0 : (d == d_pos ? 0.5 : 0.0);
      }
      const int x0 = std::max(0, cu - kFeatureLocalWindow);
      const int x1 = std::min(w - 1, cu + kFeatureLocalWindow);
      const int y0 = std::max(0, cv - kFeatureLocalWindow);
      const int y1 = std::min(h - 1, cv + kFeatureLocalWindow);
      if ((x1 - x0 + 1) * (y1 - y0 + 1) < 2)
        throw EvalError("feature_metrics: local window has no candidates");
      for (int n = 0; n < n_negatives; ++n) {  // local
        int sy, sx;
        do {
          sy = y0 + rng.uniform_int(y1 - y0 + 1);
          sx = x0 + rng.uniform_int(x1 - x0 + 1);
        } while (sy == cv && sx == cu);
        const double d = detail::feature_distance(f1, f2, y, x, sy, sx);
        m.mu_neg_local += d;
        ++n_neg_l;
        auc_l += d > d_pos ? 1.0 : (d == d_pos ? 0.5 : 0.0);
      }
    }
  if (n_pos == 0) throw EvalError("feature_metrics: no valid positive pairs");
  m.mu_pos /= static_cast<double>(n_pos);
  m.mu_neg_global /= static_cast<double>(n_neg_g);
  m.mu_neg_local /= static_cast<double>(n_neg_l);
  m.auc_global = auc_g / static_cast<double>(n_neg_g);
  m.auc_local = auc_l / static_cast<double>(n_neg_l);
  return m;
}

}  // namespace selfdepth
