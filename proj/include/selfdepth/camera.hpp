#pragma once

// Pinhole camera model, SE(3) poses (axis-angle + 0.001-scaled translation),
// disparity-to-depth mapping and the per-pixel correspondence map.
//
// Pixel convention: pixel centers at integer coordinates, origin top-left,
// u along width. A correspondence transforms a target pixel into sub-pixel
// (u,v) sampling coordinates in a support frame.

#include <array>
#include <cmath>

#include "selfdepth/tensor.hpp"

namespace selfdepth {

// ---------------------------------------------------------------------------
// Small fixed-size linear algebra (renderers, tests, pose bookkeeping).

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  static Mat3 identity() { return Mat3{}; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += (*this)(i, k) * o(k, j);
        r(i, j) = acc;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double trace() const { return m[0] + m[4] + m[8]; }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

/// Rodrigues rotation from an axis-angle vector (angle = |v|, axis = v/|v|).
/// Smooth at v = 0 via series expansion of the coefficients.
inline Mat3 rodrigues(const Vec3& w) {
  const double s = w.dot(w);
  double a, b;  // sin(t)/t and (1-cos(t))/t^2
  if (s < 1e-12) {
    a = 1.0 - s / 6.0 + s * s / 120.0;
    b = 0.5 - s / 24.0 + s * s / 720.0;
  } else {
    const double t = std::sqrt(s);
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / s;
  }
  const double x = w.x, y = w.y, z = w.z;
  Mat3 r;
  r(0, 0) = 1 - b * (y * y + z * z);
  r(0, 1) = b * x * y - a * z;
  r(0, 2) = b * x * z + a * y;
  r(1, 0) = b * x * y + a * z;
  r(1, 1) = 1 - b * (x * x + z * z);
  r(1, 2) = b * y * z - a * x;
  r(2, 0) = b * x * z - a * y;
  r(2, 1) = b * y * z + a * x;
  r(2, 2) = 1 - b * (x * x + y * y);
  return r;
}

/// Inverse of rodrigues(). Assumes a proper rotation matrix.
inline Vec3 axis_angle_from_matrix(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double t = std::acos(c);
  Vec3 skew{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  if (t < 1e-7) return skew * 0.5;  // small angle: v ~ skew/2
  const double st = std::sin(t);
  if (st > 1e-7) return skew * (0.5 * t / st);
  // angle near pi: recover axis from the symmetric part
  Vec3 axis{std::sqrt(std::max(0.0, (r(0, 0) + 1) * 0.5)),
            std::sqrt(std::max(0.0, (r(1, 1) + 1) * 0.5)),
            std::sqrt(std::max(0.0, (r(2, 2) + 1) * 0.5))};
  if (axis.x >= axis.y && axis.x >= axis.z) {
    if (r(0, 1) < 0) axis.y = -axis.y;
    if (r(0, 2) < 0) axis.z = -axis.z;
  } else if (axis.y >= axis.z) {
    if (r(0, 1) < 0) axis.x = -axis.x;
    if (r(1, 2) < 0) axis.z = -axis.z;
  } else {
    if (r(0, 2) < 0) axis.x = -axis.x;
    if (r(1, 2) < 0) axis.y = -axis.y;
  }
  double n = axis.norm();
  if (n < 1e-12) return {t, 0, 0};
  return axis * (t / n);
}

// ---------------------------------------------------------------------------
// Camera types

struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw DomainError("intrinsics: focal lengths must be positive");
  }
};

/// Rigid transform parameterized the way the pose network emits it: axis-angle
/// rotation plus a translation vector whose effective value is scaled by a
/// constant 0.001. Both live as tensors so gradients can reach the network.
struct Pose {
  static constexpr double kTranslationScale = 1e-3;

  Tensor axis_angle;   // shape {3}
  Tensor translation;  // shape {3}, pre-scale units

  static Pose identity() {
    return {Tensor::zeros({3}), Tensor::zeros({3})};
  }
  static Pose from_vectors(const Vec3& aa, const Vec3& t_pre) {
    return {Tensor::from_data({3}, {aa.x, aa.y, aa.z}),
            Tensor::from_data({3}, {t_pre.x, t_pre.y, t_pre.z})};
  }
  /// Convenience constructor from an effective (already scaled) translation.
  static Pose from_effective(const Vec3& aa, const Vec3& t_eff) {
    return from_vectors(aa, t_eff * (1.0 / kTranslationScale));
  }

  Vec3 aa_vec() const {
    return {axis_angle.at(0), axis_angle.at(1), axis_angle.at(2)};
  }
  Vec3 t_pre_vec() const {
    return {translation.at(0), translation.at(1), translation.at(2)};
  }
  Vec3 t_eff_vec() const { return t_pre_vec() * kTranslationScale; }
  Mat3 rotation() const { return rodrigues(aa_vec()); }

  /// Applies the transform to a point: R q + s t.
  Vec3 apply(const Vec3& q) const { return rotation() * q + t_eff_vec(); }
};

inline Pose pose_inverse(const Pose& p) {
  Mat3 rt = p.rotation().transposed();
  Vec3 ti = (rt * p.t_eff_vec()) * -1.0;
  return Pose::from_effective(axis_angle_from_matrix(rt), ti);
}

/// compose(a, b) applies b first, then a.
inline Pose pose_compose(const Pose& a, const Pose& b) {
  Mat3 r = a.rotation() * b.rotation();
  Vec3 t = a.rotation() * b.t_eff_vec() + a.t_eff_vec();
  return Pose::from_effective(axis_angle_from_matrix(r), t);
}

// ---------------------------------------------------------------------------
// Disparity to depth

inline constexpr double kMinDepth = 0.1;
inline constexpr double kMaxDepth = 100.0;
// depth = 1/(a d + b) with depth(0)=100 and depth(1)=0.1
inline constexpr double kDispB = 1.0 / kMaxDepth;           // 0.01
inline constexpr double kDispA = 1.0 / kMinDepth - kDispB;  // 9.99

struct DepthMap {
  Tensor values;  // [1,1,H,W], metric depth in [0.1, 100]
};

inline DepthMap disp_to_depth(const Tensor& disp) {
  const double* p = disp.data();
  for (std::int64_t i = 0; i < disp.size(); ++i)
    if (!(p[i] >= 0.0 && p[i] <= 1.0))
      throw DomainError("disp_to_depth: disparity outside [0,1]");
  Tensor depth = 1.0 / (disp * kDispA + kDispB);
  return {depth};
}

// ---------------------------------------------------------------------------
// Scalar projection chain (tests, renderer, ground-truth correspondences)

/// q = K^{-1} (u,v,1)^T d
inline Vec3 backproject(double u, double v, double depth, const Intrinsics& k) {
  if (!(depth > 0)) throw DomainError("backproject: depth must be positive");
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

struct Projection {
  double u = 0, v = 0;
  double depth = 0;     // z after the rigid transform
  bool valid = false;   // z > 0
};

/// Rigid transform, perspective divide, then intrinsics.
inline Projection project(const Vec3& q, const Intrinsics& k, const Pose& pose) {
  Vec3 qc = pose.apply(q);
  Projection out;
  out.depth = qc.z;
  out.valid = qc.z > 0;
  if (out.valid) {
    out.u = k.fx * qc.x / qc.z + k.cx;
    out.v = k.fy * qc.y / qc.z + k.cy;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable rotation entries

namespace detail {
inline double rot_coef_a(double s) {
  if (s < 1e-12) return 1.0 - s / 6.0 + s * s / 120.0;
  const double t = std::sqrt(s);
  return std::sin(t) / t;
}
inline double rot_coef_a_deriv(double s) {
  if (s < 1e-8) return -1.0 / 6.0 + s / 60.0;
  const double t = std::sqrt(s);
  return (t * std::cos(t) - std::sin(t)) / (2.0 * t * t * t);
}
inline double rot_coef_b(double s) {
  if (s < 1e-12) return 0.5 - s / 24.0 + s * s / 720.0;
  return (1.0 - std::cos(std::sqrt(s))) / s;
}
inline double rot_coef_b_deriv(double s) {
  if (s < 1e-8) return -1.0 / 24.0 + s / 360.0;
  const double t = std::sqrt(s);
  return (t * std::sin(t) - 2.0 * (1.0 - std::cos(t))) / (2.0 * s * s);
}
}  // namespace detail

/// The nine rotation matrix entries as scalar tensors, differentiable in the
/// axis-angle parameters (row-major order).
inline std::array<Tensor, 9> rotation_entries(const Tensor& axis_angle) {
  if (axis_angle.rank() != 1 || axis_angle.dim(0) != 3)
    throw ShapeError("rotation_entries expects shape [3]");
  Tensor wx = slice(axis_angle, 0, 0, 1);
  Tensor wy = slice(axis_angle, 0, 1, 1);
  Tensor wz = slice(axis_angle, 0, 2, 1);
  Tensor s = square(wx) + square(wy) + square(wz);
  Tensor a = custom_unary("rot_coef_a", s, detail::rot_coef_a,
                          detail::rot_coef_a_deriv);
  Tensor b = custom_unary("rot_coef_b", s, detail::rot_coef_b,
                          detail::rot_coef_b_deriv);
  Tensor xy = wx * wy, xz = wx * wz, yz = wy * wz;
  Tensor xx = square(wx), yy = square(wy), zz = square(wz);
  return {
      1.0 - b * (yy + zz), b * xy - a * wz,     b * xz + a * wy,
      b * xy + a * wz,     1.0 - b * (xx + zz), b * yz - a * wx,
      b * xz - a * wy,     b * yz + a * wx,     1.0 - b * (xx + yy),
  };
}

/// Rotation matrix as a [3,3] tensor, differentiable w.r.t. the input.
inline Tensor rotation_from_axis_angle(const Tensor& axis_angle) {
  auto e = rotation_entries(axis_angle);
  return reshape(concat({e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]}, 0),
                 {3, 3});
}

// ---------------------------------------------------------------------------
// Correspondence map

/// Per-pixel sub-pixel sampling locations in a support frame.
struct CorrespondenceMap {
  Tensor coords;      // [1,2,H,W]: channel 0 = u, channel 1 = v; differentiable
  Tensor in_bounds;   // [1,1,H,W] 0/1 constants
  Tensor proj_depth;  // [1,1,H,W] z after the rigid transform; differentiable
  int height = 0, width = 0;
};

namespace detail {
struct PixelGrids {
  Tensor nx, ny;  // (u-cx)/fx and (v-cy)/fy as [1,1,H,W] constants
};
inline PixelGrids pixel_grids(int h, int w, const Intrinsics& k) {
  std::vector<double> nx(static_cast<std::size_t>(h) * w);
  std::vector<double> ny(nx.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      nx[static_cast<std::size_t>(y) * w + x] = (x - k.cx) / k.fx;
      ny[static_cast<std::size_t>(y) * w + x] = (y - k.cy) / k.fy;
    }
  return {Tensor::from_data({1, 1, h, w}, std::move(nx)),
          Tensor::from_data({1, 1, h, w}, std::move(ny))};
}
}  // namespace detail

/// Projects every target pixel through its depth into the support frame:
/// backproject, rigid transform with the 0.001-scaled translation, perspective
/// divide, intrinsics. Differentiable w.r.t. the depth map and pose tensors.
inline CorrespondenceMap correspondence_map(const DepthMap& depth,
                                            const Pose& pose,
                                            const Intrinsics& k) {
  k.validate();
  const Tensor& d = depth.values;
  if (d.rank() != 4 || d.dim(0) != 1 || d.dim(1) != 1)
    throw ShapeError("correspondence_map expects depth [1,1,H,W]");
  const int h = d.dim(2), w = d.dim(3);
  auto grids = detail::pixel_grids(h, w, k);

  Tensor qx = grids.nx * d;
  Tensor qy = grids.ny * d;
  // qz = d
  auto r = rotation_entries(pose.axis_angle);
  Tensor tx = slice(pose.translation, 0, 0, 1) * Pose::kTranslationScale;
  Tensor ty = slice(pose.translation, 0, 1, 1) * Pose::kTranslationScale;
  Tensor tz = slice(pose.translation, 0, 2, 1) * Pose::kTranslationScale;

  Tensor cx_ = r[0] * qx + r[1] * qy + r[2] * d + tx;
  Tensor cy_ = r[3] * qx + r[4] * qy + r[5] * d + ty;
  Tensor cz_ = r[6] * qx + r[7] * qy + r[8] * d + tz;

  // Clamp the divisor so invalid pixels stay finite; they are excluded via
  // the in_bounds mask anyway.
  Tensor z_safe = maximum(cz_, Tensor::scalar(1e-6));
  Tensor u = cx_ / z_safe * k.fx + k.cx;
  Tensor v = cy_ / z_safe * k.fy + k.cy;

  Tensor in_bounds = Tensor::zeros({1, 1, h, w});
  {
    double* m = in_bounds.mutable_data();
    const double* pu = u.data();
    const double* pv = v.data();
    const double* pz = cz_.data();
    const std::int64_t n = in_bounds.size();
    for (std::int64_t i = 0; i < n; ++i)
      m[i] = (pz[i] > 0 && pu[i] >= 0 && pu[i] <= w - 1 && pv[i] >= 0 &&
              pv[i] <= h - 1)
                 ? 1.0
                 : 0.0;
  }
  CorrespondenceMap out;
  out.coords = concat({u, v}, 1);
  out.in_bounds = in_bounds;
  out.proj_depth = cz_;
  out.height = h;
  out.width = w;
  return out;
}

}  // namespace selfdepth
