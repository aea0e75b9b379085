#pragma once

// Training objectives: SSIM, the SSIM/L1 warp cost, photometric and feature
// warp losses, the pixel-wise contrastive loss with spatial negative mining,
// and edge-aware depth smoothness.

#include <cmath>
#include <span>
#include <vector>

#include "selfdepth/camera.hpp"
#include "selfdepth/tensor.hpp"
#include "selfdepth/warp.hpp"

namespace selfdepth {

// ---------------------------------------------------------------------------
// SSIM and warp cost

/// Per-pixel structural similarity with 3x3 uniform (box) statistics computed
/// over the in-bounds part of each window, stabilizers c1=0.01^2, c2=0.03^2.
/// Output has the same shape as the inputs, values in [-1, 1].
inline Tensor ssim_map(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
  const double c1 = 1e-4, c2 = 9e-4;
  Tensor mu1 = local_mean3x3(a);
  Tensor mu2 = local_mean3x3(b);
  Tensor mu1_sq = square(mu1);
  Tensor mu2_sq = square(mu2);
  Tensor mu12 = mu1 * mu2;
  Tensor s1 = local_mean3x3(square(a)) - mu1_sq;
  Tensor s2 = local_mean3x3(square(b)) - mu2_sq;
  Tensor s12 = local_mean3x3(a * b) - mu12;
  return ((2.0 * mu12 + c1) * (2.0 * s12 + c2)) /
         ((mu1_sq + mu2_sq + c1) * (s1 + s2 + c2));
}

/// Channel-averaged per-pixel warp cost alpha*(1-SSIM)/2 + (1-alpha)*|a-b|,
/// shape [1,1,H,W].
inline Tensor warp_cost_map(const Tensor& a, const Tensor& b, double alpha) {
  Tensor per_channel =
      alpha * ((1.0 - ssim_map(a, b)) * 0.5) + (1.0 - alpha) * abs(a - b);
  return mean(per_channel, 1, /*keepdim=*/true);
}

/// Mean of `map` over pixels where mask > 0.5. An empty mask yields a
/// constant 0 and raises the warning flag.
inline Tensor masked_mean(const Tensor& map, const Tensor& mask,
                          bool* empty_warning = nullptr) {
  if (map.shape() != mask.shape())
    throw ShapeError("masked_mean: map and mask shapes differ");
  std::int64_t count = 0;
  const double* pm = mask.data();
  for (std::int64_t i = 0; i < mask.size(); ++i)
    if (pm[i] > 0.5) ++count;
  if (count == 0) {
    if (empty_warning) *empty_warning = true;
    return Tensor::scalar(0.0);
  }
  return sum(map * mask) / static_cast<double>(count);
}

/// Scalar warp cost, averaged over channels and all pixels.
inline Tensor warp_cost(const Tensor& a, const Tensor& b, double alpha) {
  return mean(warp_cost_map(a, b, alpha));
}

/// Scalar warp cost over valid pixels only.
inline Tensor warp_cost(const Tensor& a, const Tensor& b, double alpha,
                        const Tensor& validity, bool* empty_warning = nullptr) {
  return masked_mean(warp_cost_map(a, b, alpha), validity, empty_warning);
}

inline Tensor photometric_loss(const Tensor& target, const WarpResult& warped,
                               double alpha, bool* empty_warning = nullptr) {
  return warp_cost(target, warped.warped, alpha, warped.validity, empty_warning);
}

inline Tensor feature_loss(const Tensor& target_features, const WarpResult& warped,
                           double alpha, bool* empty_warning = nullptr) {
  return warp_cost(target_features, warped.warped, alpha, warped.validity,
                   empty_warning);
}

// ---------------------------------------------------------------------------
// Pixel-wise contrastive loss

enum class PairLabel : int { kNegative = 0, kPositive = 1, kIgnore = -1 };

struct PairEntry {
  int p1y = 0, p1x = 0;  // target pixel
  int p2y = 0, p2x = 0;  // support pixel
  PairLabel label = PairLabel::kIgnore;
};

/// Ternary labels over target/support pixel pairs. Entries are grouped: each
/// positive is followed by its mined negatives for the same target pixel.
struct LabelMask {
  int height = 0, width = 0;
  std::vector<PairEntry> entries;

  std::size_t count(PairLabel l) const {
    std::size_t n = 0;
    for (const auto& e : entries)
      if (e.label == l) ++n;
    return n;
  }
};

/// Contrastive loss for a single pair: y=1 -> d^2/2, y=0 -> max(0, m-d)^2/2,
/// anything else 0, with d the euclidean feature distance.
inline double contrastive_pair(int label, std::span<const double> f1,
                               std::span<const double> f2, double margin) {
  double d2 = 0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const double d = f1[i] - f2[i];
    d2 += d * d;
  }
  if (label == 1) return 0.5 * d2;
  if (label == 0) {
    const double h = margin - std::sqrt(d2);
    return h > 0 ? 0.5 * h * h : 0.0;
  }
  return 0.0;
}

enum class MiningStrategy { kGlobal, kLocal, kGlobalLocal };

inline constexpr int kLocalMiningWindow = 25;  // Chebyshev radius in pixels

/// Builds a label mask from a correspondence map: every valid pixel yields a
/// positive pair at the rounded correspondence plus `ratio` mined negatives.
/// Global negatives are uniform over the support frame outside a disc of
/// `exclusion_radius` around the true (sub-pixel) match; local negatives are
/// uniform within a 25-pixel Chebyshev window around the rounded match,
/// outside the same disc. Deterministic for a fixed seed.
inline LabelMask mine_negatives(const CorrespondenceMap& cmap,
                                MiningStrategy strategy, int ratio,
                                double exclusion_radius, std::uint64_t seed) {
  if (ratio < 1) throw MiningError("mining ratio must be >= 1");
  if (exclusion_radius < 0) throw MiningError("exclusion radius must be >= 0");
  const int h = cmap.height, w = cmap.width;
  const bool uses_local = strategy != MiningStrategy::kGlobal;
  if (uses_local && exclusion_radius >= kLocalMiningWindow)
    throw MiningError("local mining window is smaller than the exclusion disc");

  LabelMask out;
  out.height = h;
  out.width = w;
  Rng rng(seed);
  const double* pu = cmap.coords.data();
  const double* pv = pu + static_cast<std::int64_t>(h) * w;
  const double* pb = cmap.in_bounds.data();
  const double r2 = exclusion_radius * exclusion_radius;

  auto sample_global = [&](double tu, double tv, PairEntry& e) {
    for (int tries = 0; tries < 10000; ++tries) {
      const int sy = rng.uniform_int(h);
      const int sx = rng.uniform_int(w);
      const double du = sx - tu, dv = sy - tv;
      if (du * du + dv * dv > r2) {
        e.p2y = sy;
        e.p2x = sx;
        return;
      }
    }
    throw MiningError("global mining failed to find an admissible negative");
  };
  auto sample_local = [&](double tu, double tv, int cu, int cv, PairEntry& e) {
    const int x0 = std::max(0, cu - kLocalMiningWindow);
    const int x1 = std::min(w - 1, cu + kLocalMiningWindow);
    const int y0 = std::max(0, cv - kLocalMiningWindow);
    const int y1 = std::min(h - 1, cv + kLocalMiningWindow);
    for (int tries = 0; tries < 10000; ++tries) {
      const int sy = y0 + rng.uniform_int(y1 - y0 + 1);
      const int sx = x0 + rng.uniform_int(x1 - x0 + 1);
      const double du = sx - tu, dv = sy - tv;
      if (du * du + dv * dv > r2) {
        e.p2y = sy;
        e.p2x = sx;
        return;
      }
    }
    throw MiningError("local mining window is smaller than the exclusion disc");
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (pb[i] < 0.5) continue;
      const double tu = pu[i], tv = pv[i];
      const int cu = static_cast<int>(std::lround(tu));
      const int cv = static_cast<int>(std::lround(tv));
      PairEntry pos{y, x, cv, cu, PairLabel::kPositive};
      out.entries.push_back(pos);
      const int n_global = strategy == MiningStrategy::kGlobal ? ratio
                           : strategy == MiningStrategy::kLocal
                               ? 0
                               : (ratio + 1) / 2;
      for (int n = 0; n < ratio; ++n) {
        PairEntry neg{y, x, 0, 0, PairLabel::kNegative};
        if (n < n_global)
          sample_global(tu, tv, neg);
        else
          sample_local(tu, tv, cu, cv, neg);
        out.entries.push_back(neg);
      }
    }
  }
  return out;
}

/// Sum of contrastive pair losses over all labeled pairs, divided by the
/// number of non-ignored pairs. Feature maps are expected L2-normalized.
inline Tensor pixelwise_contrastive(const Tensor& f_target,
                                    const Tensor& f_support,
                                    const LabelMask& labels, double margin,
                                    bool* empty_warning = nullptr) {
  if (margin <= 0) throw DomainError("contrastive margin must be positive");
  std::vector<int> y1, x1, y2, x2;
  std::vector<double> pos_mask, neg_mask;
  for (const auto& e : labels.entries) {
    if (e.label == PairLabel::kIgnore) continue;
    y1.push_back(e.p1y);
    x1.push_back(e.p1x);
    y2.push_back(e.p2y);
    x2.push_back(e.p2x);
    pos_mask.push_back(e.label == PairLabel::kPositive ? 1.0 : 0.0);
    neg_mask.push_back(e.label == PairLabel::kNegative ? 1.0 : 0.0);
  }
  const int m = static_cast<int>(y1.size());
  if (m == 0) {
    if (empty_warning) *empty_warning = true;
    return Tensor::scalar(0.0);
  }
  Tensor a = gather_pixels(f_target, y1, x1);   // [C,M]
  Tensor b = gather_pixels(f_support, y2, x2);  // [C,M]
  Tensor d2 = sum(square(a - b), 0);            // [M]
  Tensor d = sqrt(d2);
  Tensor pos = Tensor::from_data({m}, std::move(pos_mask));
  Tensor neg = Tensor::from_data({m}, std::move(neg_mask));
  Tensor per_pair = pos * (0.5 * d2) + neg * (0.5 * square(relu(margin - d)));
  return sum(per_pair) / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Edge-aware smoothness

/// (lambda / (H*W)) * sum_p |dD| * exp(-||dI||) with forward differences in u
/// and v; the image gradient norm is the L2 norm over channels.
inline Tensor smoothness_loss(const Tensor& depth, const Tensor& image,
                              double lambda) {
  if (depth.rank() != 4 || image.rank() != 4 || depth.dim(2) != image.dim(2) ||
      depth.dim(3) != image.dim(3))
    throw ShapeError("smoothness_loss: depth and image must be spatially aligned");
  const int h = depth.dim(2), w = depth.dim(3);
  Tensor du_d = abs(slice(depth, 3, 1, w - 1) - slice(depth, 3, 0, w - 1));
  Tensor dv_d = abs(slice(depth, 2, 1, h - 1) - slice(depth, 2, 0, h - 1));
  Tensor du_i = slice(image, 3, 1, w - 1) - slice(image, 3, 0, w - 1);
  Tensor dv_i = slice(image, 2, 1, h - 1) - slice(image, 2, 0, h - 1);
  Tensor wu = exp(-sqrt(sum(square(du_i), 1, true)));
  Tensor wv = exp(-sqrt(sum(square(dv_i), 1, true)));
  Tensor total = sum(du_d * wu) + sum(dv_d * wv);
  return total * (lambda / static_cast<double>(h * w));
}

}  // namespace selfdepth
