#pragma once

// Desk-scale encoder-decoder networks: DispNet (multi-scale sigmoid
// disparity), PoseNet (axis-angle + 0.001-scaled translation) and FeatNet
// (residual encoder with a four-scale spatial pyramid pooling stage and an
// L2-normalized dense feature head).

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "selfdepth/camera.hpp"
#include "selfdepth/tensor.hpp"

namespace selfdepth {

using ParamList = std::vector<std::pair<std::string, Tensor>>;

// ---------------------------------------------------------------------------
// Layers

struct Conv {
  Tensor w, b;
  int stride = 1, pad = 1;

  static Conv make(int in_ch, int out_ch, int k, int stride, Rng& rng) {
    Conv c;
    const double limit = std::sqrt(6.0 / (in_ch * k * k));
    c.w = random_uniform({out_ch, in_ch, k, k}, rng, -limit, limit);
    c.w.set_requires_grad(true);
    c.b = Tensor::zeros({out_ch}, /*requires_grad=*/true);
    c.stride = stride;
    c.pad = (k - 1) / 2;
    return c;
  }
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
  void register_params(ParamList& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
  void zero_init() {
    std::fill_n(w.mutable_data(), w.size(), 0.0);
    std::fill_n(b.mutable_data(), b.size(), 0.0);
  }
};

struct ResBlock {
  Conv c1, c2;
  static ResBlock make(int ch, Rng& rng) {
    return {Conv::make(ch, ch, 3, 1, rng), Conv::make(ch, ch, 3, 1, rng)};
  }
  Tensor operator()(const Tensor& x) const {
    return relu(c2(relu(c1(x))) + x);
  }
  void register_params(ParamList& out, const std::string& prefix) const {
    c1.register_params(out, prefix + ".c1");
    c2.register_params(out, prefix + ".c2");
  }
};

// ---------------------------------------------------------------------------
// DispNet

/// Four-stage strided encoder (16/32/64/128 channels) and a skip decoder with
/// sigmoid disparity heads at scales s in {0,1,2,3}; scale s has spatial size
/// (H/2^s, W/2^s).
class DispNetModel {
 public:
  explicit DispNetModel(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 101));
    enc1_ = Conv::make(3, 16, 3, 2, rng);
    enc2_ = Conv::make(16, 32, 3, 2, rng);
    enc3_ = Conv::make(32, 64, 3, 2, rng);
    enc4_ = Conv::make(64, 128, 3, 1, rng);
    dec3_ = Conv::make(128, 64, 3, 1, rng);
    dec2_ = Conv::make(64 + 32, 32, 3, 1, rng);
    dec1_ = Conv::make(32 + 16, 16, 3, 1, rng);
    dec0_ = Conv::make(16, 8, 3, 1, rng);
    head3_ = Conv::make(64, 1, 3, 1, rng);
    head2_ = Conv::make(32, 1, 3, 1, rng);
    head1_ = Conv::make(16, 1, 3, 1, rng);
    head0_ = Conv::make(8, 1, 3, 1, rng);
  }

  /// Disparity maps indexed by scale: [0] full resolution ... [3] eighth.
  std::array<Tensor, 4> forward(const Tensor& image) const {
    ++forward_calls;
    if (image.rank() != 4 || image.dim(1) != 3)
      throw ShapeError("dispnet: expected [1,3,H,W] input");
    const int h = image.dim(2), w = image.dim(3);
    if (h % 8 != 0 || w % 8 != 0)
      throw ShapeError("dispnet: spatial size must be divisible by 8");
    Tensor e1 = relu(enc1_(image));  // /2
    Tensor e2 = relu(enc2_(e1));     // /4
    Tensor e3 = relu(enc3_(e2));     // /8
    Tensor e4 = relu(enc4_(e3));     // /8
    Tensor d3 = relu(dec3_(e4));
    Tensor s3 = sigmoid(head3_(d3));
    Tensor d2 = relu(dec2_(concat({resize_nearest(d3, h / 4, w / 4), e2}, 1)));
    Tensor s2 = sigmoid(head2_(d2));
    Tensor d1 = relu(dec1_(concat({resize_nearest(d2, h / 2, w / 2), e1}, 1)));
    Tensor s1 = sigmoid(head1_(d1));
    Tensor d0 = relu(dec0_(resize_nearest(d1, h, w)));
    Tensor s0 = sigmoid(head0_(d0));
    return {s0, s1, s2, s3};
  }

  ParamList parameters() const {
    ParamList out;
    enc1_.register_params(out, "disp.enc1");
    enc2_.register_params(out, "disp.enc2");
    enc3_.register_params(out, "disp.enc3");
    enc4_.register_params(out, "disp.enc4");
    dec3_.register_params(out, "disp.dec3");
    dec2_.register_params(out, "disp.dec2");
    dec1_.register_params(out, "disp.dec1");
    dec0_.register_params(out, "disp.dec0");
    head3_.register_params(out, "disp.head3");
    head2_.register_params(out, "disp.head2");
    head1_.register_params(out, "disp.head1");
    head0_.register_params(out, "disp.head0");
    return out;
  }

  mutable std::uint64_t forward_calls = 0;

 private:
  Conv enc1_, enc2_, enc3_, enc4_;
  Conv dec3_, dec2_, dec1_, dec0_;
  Conv head3_, head2_, head1_, head0_;
};

// ---------------------------------------------------------------------------
// PoseNet

/// Encoder over the channel-concatenated image pair followed by a 4-layer
/// convolutional decoder; emits axis-angle rotation and a translation read
/// through the 0.001 scale. The final layer is zero-initialized so an
/// untrained network predicts the identity pose.
class PoseNetModel {
 public:
  explicit PoseNetModel(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 202));
    enc1_ = Conv::make(6, 16, 3, 2, rng);
    enc2_ = Conv::make(16, 32, 3, 2, rng);
    enc3_ = Conv::make(32, 64, 3, 2, rng);
    dec1_ = Conv::make(64, 32, 3, 1, rng);
    dec2_ = Conv::make(32, 32, 3, 1, rng);
    dec3_ = Conv::make(32, 32, 3, 1, rng);
    dec4_ = Conv::make(32, 6, 1, 1, rng);
    dec4_.zero_init();
  }

  Pose forward(const Tensor& target, const Tensor& support) const {
    ++forward_calls;
    if (target.shape() != support.shape())
      throw ShapeError("posenet: image pair shapes differ");
    Tensor x = concat({target, support}, 1);
    x = relu(enc1_(x));
    x = relu(enc2_(x));
    x = relu(enc3_(x));
    x = relu(dec1_(x));
    x = relu(dec2_(x));
    x = relu(dec3_(x));
    x = dec4_(x);
    Tensor pooled = reshape(adaptive_avg_pool(x, 1, 1), {6});
    return Pose{slice(pooled, 0, 0, 3), slice(pooled, 0, 3, 3)};
  }

  ParamList parameters() const {
    ParamList out;
    enc1_.register_params(out, "pose.enc1");
    enc2_.register_params(out, "pose.enc2");
    enc3_.register_params(out, "pose.enc3");
    dec1_.register_params(out, "pose.dec1");
    dec2_.register_params(out, "pose.dec2");
    dec3_.register_params(out, "pose.dec3");
    dec4_.register_params(out, "pose.dec4");
    return out;
  }

  mutable std::uint64_t forward_calls = 0;

 private:
  Conv enc1_, enc2_, enc3_;
  Conv dec1_, dec2_, dec3_, dec4_;
};

// ---------------------------------------------------------------------------
// FeatNet

/// Residual-block encoder-decoder with skip connections; the final encoder
/// stage feeds a four-scale spatial pyramid pooling block whose upsampled
/// branches concatenate to 128 + 4*(128/4) = 256 channels into the fusion
/// conv. Output is a per-pixel L2-normalized n-channel feature map.
class FeatNetModel {
 public:
  explicit FeatNetModel(std::uint64_t seed, int feature_dim = 16)
      : feature_dim_(feature_dim) {
    if (feature_dim < 2) throw ConfigError("featnet: feature dimension must be >= 2");
    Rng rng(derive_seed(seed, 303));
    e0_ = Conv::make(3, 8, 3, 1, rng);
    e1_ = Conv::make(8, 16, 3, 2, rng);
    r1_ = ResBlock::make(16, rng);
    e2_ = Conv::make(16, 32, 3, 2, rng);
    r2_ = ResBlock::make(32, rng);
    e3_ = Conv::make(32, 128, 3, 2, rng);
    for (int i = 0; i < 4; ++i) spp_[i] = Conv::make(128, 32, 1, 1, rng);
    fuse_ = Conv::make(256, 128, 1, 1, rng);
    d2_ = Conv::make(128 + 32, 48, 1, 1, rng);
    d1_ = Conv::make(48 + 16, 24, 1, 1, rng);
    d0_ = Conv::make(24 + 8, feature_dim, 1, 1, rng);
  }

  int feature_dim() const { return feature_dim_; }
  int fusion_in_channels() const { return fuse_.w.dim(1); }

  Tensor forward(const Tensor& image) const {
    ++forward_calls;
    if (image.rank() != 4 || image.dim(1) != 3)
      throw ShapeError("featnet: expected [1,3,H,W] input");
    const int h = image.dim(2), w = image.dim(3);
    if (h % 8 != 0 || w % 8 != 0)
      throw ShapeError("featnet: spatial size must be divisible by 8");
    Tensor f0 = relu(e0_(image));            // full
    Tensor f1 = r1_(relu(e1_(f0)));          // /2
    Tensor f2 = r2_(relu(e2_(f1)));          // /4
    Tensor f3 = relu(e3_(f2));               // /8, SPP input
    const int h8 = h / 8, w8 = w / 8;
    std::vector<Tensor> branches{f3};
    const int grids[4] = {1, 2, 4, 8};
    for (int i = 0; i < 4; ++i) {
      const int gh = std::min(grids[i], h8), gw = std::min(grids[i], w8);
      Tensor pooled = adaptive_avg_pool(f3, gh, gw);
      branches.push_back(resize_nearest(relu(spp_[i](pooled)), h8, w8));
    }
    Tensor fused = relu(fuse_(concat(branches, 1)));
    Tensor g2 = relu(d2_(concat({resize_nearest(fused, h / 4, w / 4), f2}, 1)));
    Tensor g1 = relu(d1_(concat({resize_nearest(g2, h / 2, w / 2), f1}, 1)));
    Tensor g0 = d0_(concat({resize_nearest(g1, h, w), f0}, 1));
    // per-pixel L2 normalization
    Tensor norm = sqrt(sum(square(g0), 1, /*keepdim=*/true) + 1e-20);
    return g0 / norm;
  }

  ParamList parameters() const {
    ParamList out;
    e0_.register_params(out, "feat.e0");
    e1_.register_params(out, "feat.e1");
    r1_.register_params(out, "feat.r1");
    e2_.register_params(out, "feat.e2");
    r2_.register_params(out, "feat.r2");
    e3_.register_params(out, "feat.e3");
    for (int i = 0; i < 4; ++i)
      spp_[i].register_params(out, "feat.spp" + std::to_string(i));
    fuse_.register_params(out, "feat.fuse");
    d2_.register_params(out, "feat.d2");
    d1_.register_params(out, "feat.d1");
    d0_.register_params(out, "feat.d0");
    return out;
  }

  mutable std::uint64_t forward_calls = 0;

 private:
  int feature_dim_;
  Conv e0_, e1_, e2_, e3_;
  ResBlock r1_, r2_;
  std::array<Conv, 4> spp_;
  Conv fuse_, d2_, d1_, d0_;
};

// ---------------------------------------------------------------------------
// Optimizer: gradient descent with first/second-moment scaling

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double step_size = 1e-4, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : lr_(step_size), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const ParamList& params) {
    for (const auto& [name, t] : params) {
      names_.push_back(name);
      params_.push_back(t);
      m1_.emplace_back(t.size(), 0.0);
      m2_.emplace_back(t.size(), 0.0);
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  /// Applies one update from the gradients accumulated on the parameters,
  /// then clears them. Parameters without a populated gradient are treated
  /// as having zero gradient.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor& param = params_[p];
      const double* g = param.has_grad() ? param.grad().data() : nullptr;
      double* v = param.mutable_data();
      double* m1 = m1_[p].data();
      double* m2 = m2_[p].data();
      const std::int64_t n = param.size();
      for (std::int64_t i = 0; i < n; ++i) {
        const double gi = g ? g[i] : 0.0;
        m1[i] = beta1_ * m1[i] + (1 - beta1_) * gi;
        m2[i] = beta2_ * m2[i] + (1 - beta2_) * gi * gi;
        const double mh = m1[i] / bc1;
        const double vh = m2[i] / bc2;
        v[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
      param.zero_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<double>& moment1(std::size_t i) { return m1_[i]; }
  std::vector<double>& moment2(std::size_t i) { return m2_[i]; }
  const std::vector<double>& moment1(std::size_t i) const { return m1_[i]; }
  const std::vector<double>& moment2(std::size_t i) const { return m2_[i]; }
  std::size_t size() const { return params_.size(); }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m1_, m2_;
};

}  // namespace selfdepth
