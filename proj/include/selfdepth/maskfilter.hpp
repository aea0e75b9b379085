#pragma once

// Occlusion handling via per-pixel minimum reprojection error and stationary
// pixel automasking. Both decisions are hard (non-differentiable): gradient
// flows only through the selected error branch, never through the masks.

#include "selfdepth/losses.hpp"
#include "selfdepth/tensor.hpp"

namespace selfdepth {

/// Per-pixel support-frame selection. chosen_k holds -1/+1 per pixel; mask
/// holds the automask decision where computed.
struct PixelSelection {
  Tensor fused;     // [1,1,H,W] per-pixel minimum error, differentiable
  Tensor chosen_k;  // [1,1,H,W] values in {-1,+1}, constants; ties -> -1
};

/// Fuses the error maps against the previous (k=-1) and next (k=+1) support
/// frames by taking the per-pixel minimum. Gradient flows only through the
/// selected branch; ties select k=-1.
inline PixelSelection min_reprojection(const Tensor& err_prev,
                                       const Tensor& err_next) {
  if (err_prev.shape() != err_next.shape())
    throw ShapeError("min_reprojection: error map shapes differ");
  PixelSelection out;
  out.fused = minimum(err_prev, err_next);
  out.chosen_k = Tensor::zeros(err_prev.shape());
  double* pk = out.chosen_k.mutable_data();
  const double* pp = err_prev.data();
  const double* pn = err_next.data();
  for (std::int64_t i = 0; i < err_prev.size(); ++i)
    pk[i] = pp[i] <= pn[i] ? -1.0 : 1.0;
  return out;
}

/// Automask from precomputed per-pixel error maps: mu(p) = 1 iff the best
/// unwarped error strictly exceeds the best warped error. Ties mask (mu=0) —
/// a stationary pixel with equal errors carries no signal.
inline Tensor automask_from_errors(const Tensor& unwarped_min,
                                   const Tensor& warped_min) {
  if (unwarped_min.shape() != warped_min.shape())
    throw ShapeError("automask: error map shapes differ");
  Tensor mu = Tensor::zeros(unwarped_min.shape());
  double* pm = mu.mutable_data();
  const double* pu = unwarped_min.data();
  const double* pw = warped_min.data();
  for (std::int64_t i = 0; i < mu.size(); ++i)
    pm[i] = pu[i] > pw[i] ? 1.0 : 0.0;
  return mu;
}

/// Stationary-pixel mask from the raw and warped support frames:
/// mu = [ min_k psi(I_t, I_{t+k}) > min_k psi(I_t, I_{t+k->t}) ] per pixel,
/// with the same per-pixel SSIM/L1 mix used by the warp losses. The decision
/// is taken on values only; nothing is recorded on the tape.
inline Tensor automask(const Tensor& target, const Tensor& prev,
                       const Tensor& next, const Tensor& warped_prev,
                       const Tensor& warped_next, double alpha) {
  NoGrad ng;
  Tensor unwarped = minimum(warp_cost_map(target, prev, alpha),
                            warp_cost_map(target, next, alpha));
  Tensor warped = minimum(warp_cost_map(target, warped_prev, alpha),
                          warp_cost_map(target, warped_next, alpha));
  return automask_from_errors(unwarped, warped);
}

/// Relabels to "ignore" every pair whose target pixel is masked (mu=0) or
/// lost the minimum-reprojection selection for this support frame. A filtered
/// positive takes its mined negatives with it.
inline void filter_labels(LabelMask& labels, const Tensor& chosen_k,
                          int support_k, const Tensor& mask_mu) {
  const double* pk = chosen_k.data();
  const double* pm = mask_mu.data();
  const int w = labels.width;
  for (auto& e : labels.entries) {
    const std::int64_t i = static_cast<std::int64_t>(e.p1y) * w + e.p1x;
    if (pm[i] < 0.5 || static_cast<int>(pk[i]) != support_k)
      e.label = PairLabel::kIgnore;
  }
}

}  // namespace selfdepth
