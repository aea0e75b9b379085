#pragma once

// Differentiable bilinear sampling of images and feature maps at
// correspondence coordinates. Out-of-range coordinates clamp to the border
// and are reported invalid through the validity mask; downstream losses
// exclude invalid pixels from their means.

#include <cmath>

#include "selfdepth/camera.hpp"
#include "selfdepth/tensor.hpp"

namespace selfdepth {

struct WarpResult {
  Tensor warped;    // [1,C,H,W]
  Tensor validity;  // [1,1,H,W] 0/1 constants
};

/// Samples `source` at per-pixel (u,v) coordinates with bilinear weights.
/// Gradients flow to the source values and to the coordinates, hence to depth
/// and pose through the correspondence module. Exact at integer coordinates.
inline Tensor bilinear_sample(const Tensor& source, const Tensor& coords) {
  if (source.rank() != 4 || source.dim(0) != 1)
    throw ShapeError("bilinear_sample expects source [1,C,H,W]");
  if (coords.rank() != 4 || coords.dim(0) != 1 || coords.dim(1) != 2)
    throw ShapeError("bilinear_sample expects coords [1,2,H,W]");
  const int C = source.dim(1), H = source.dim(2), W = source.dim(3);
  if (coords.dim(2) != H || coords.dim(3) != W)
    throw ShapeError("bilinear_sample: coords spatial size must match source");

  Tensor out = Tensor::zeros({1, C, H, W});
  const double* ps = source.data();
  const double* pc = coords.data();
  double* po = out.mutable_data();
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;

  for (std::int64_t i = 0; i < hw; ++i) {
    double u = pc[i];
    double v = pc[hw + i];
    u = std::clamp(u, 0.0, static_cast<double>(W - 1));
    v = std::clamp(v, 0.0, static_cast<double>(H - 1));
    int x0 = std::min(static_cast<int>(u), W - 2 >= 0 ? W - 2 : 0);
    int y0 = std::min(static_cast<int>(v), H - 2 >= 0 ? H - 2 : 0);
    const double fx = u - x0;
    const double fy = v - y0;
    const std::int64_t base = static_cast<std::int64_t>(y0) * W + x0;
    const double w00 = (1 - fy) * (1 - fx);
    const double w01 = (1 - fy) * fx;
    const double w10 = fy * (1 - fx);
    const double w11 = fy * fx;
    for (int c = 0; c < C; ++c) {
      const double* ch = ps + static_cast<std::int64_t>(c) * hw;
      po[c * hw + i] = w00 * ch[base] + w01 * ch[base + 1] +
                       w10 * ch[base + W] + w11 * ch[base + W + 1];
    }
  }

  if (detail::should_record({&source, &coords})) {
    Tensor sc = source, cc = coords, oc = out;
    detail::record("bilinear_sample", {source, coords}, out, [sc, cc, oc]() mutable {
      const int C = sc.dim(1), H = sc.dim(2), W = sc.dim(3);
      const std::int64_t hw = static_cast<std::int64_t>(H) * W;
      const double* go = oc.grad().data();
      const double* ps = sc.data();
      const double* pc = cc.data();
      double* gs = sc.requires_grad() ? sc.grad_buffer().data() : nullptr;
      double* gc = cc.requires_grad() ? cc.grad_buffer().data() : nullptr;
      for (std::int64_t i = 0; i < hw; ++i) {
        double u = pc[i];
        double v = pc[hw + i];
        const bool uin = u > 0.0 && u < W - 1;  // clamped coords get no gradient
        const bool vin = v > 0.0 && v < H - 1;
        u = std::clamp(u, 0.0, static_cast<double>(W - 1));
        v = std::clamp(v, 0.0, static_cast<double>(H - 1));
        int x0 = std::min(static_cast<int>(u), W - 2 >= 0 ? W - 2 : 0);
        int y0 = std::min(static_cast<int>(v), H - 2 >= 0 ? H - 2 : 0);
        const double fx = u - x0;
        const double fy = v - y0;
        const std::int64_t base = static_cast<std::int64_t>(y0) * W + x0;
        double du = 0, dv = 0;
        for (int c = 0; c < C; ++c) {
          const double g = go[c * hw + i];
          if (g == 0.0 && gc == nullptr) continue;
          const double* ch = ps + static_cast<std::int64_t>(c) * hw;
          if (gs) {
            double* gch = gs + static_cast<std::int64_t>(c) * hw;
            gch[base] += g * (1 - fy) * (1 - fx);
            gch[base + 1] += g * (1 - fy) * fx;
            gch[base + W] += g * fy * (1 - fx);
            gch[base + W + 1] += g * fy * fx;
          }
          if (gc) {
            du += g * ((1 - fy) * (ch[base + 1] - ch[base]) +
                       fy * (ch[base + W + 1] - ch[base + W]));
            dv += g * ((1 - fx) * (ch[base + W] - ch[base]) +
                       fx * (ch[base + W + 1] - ch[base + 1]));
          }
        }
        if (gc) {
          if (uin) gc[i] += du;
          if (vin) gc[hw + i] += dv;
        }
      }
    });
  }
  return out;
}

/// Warps a support-frame tensor to the target frame through a correspondence
/// map, propagating the map's validity.
inline WarpResult bilinear_sample(const Tensor& source,
                                  const CorrespondenceMap& cmap) {
  if (source.dim(2) != cmap.height || source.dim(3) != cmap.width)
    throw ShapeError("bilinear_sample: source size does not match correspondence map");
  return {bilinear_sample(source, cmap.coords), cmap.in_bounds};
}

}  // namespace selfdepth
