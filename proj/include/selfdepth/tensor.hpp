#pragma once

// Dense f64 tensors with reverse-mode gradient accumulation on an explicit
// tape, plus the NN primitives the rest of the library is built from.
//
// Conventions:
//  - row-major layout, image tensors are [N,C,H,W]
//  - 64-bit floats everywhere
//  - trailing/right-aligned broadcasting (scalar and size-1 axes)
//  - kink subgradients: abs'(0)=0, sqrt'(0)=0, min/max ties take the first
//    argument

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "selfdepth/errors.hpp"

namespace selfdepth {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ShapeError("non-positive extent in shape");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + "]";
}

// ---------------------------------------------------------------------------
// Tensor

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0, requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    return Tensor(std::move(shape), value, requires_grad);
  }
  static Tensor scalar(double value) { return Tensor(Shape{1}, value, false); }
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("from_data: shape " + shape_str(shape) +
                       " does not match data length " +
                       std::to_string(data.size()));
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(impl_->data.size());
  }

  const double* data() const { return impl_->data.data(); }
  double* mutable_data() { return impl_->data.data(); }
  const std::vector<double>& values() const { return impl_->data; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw EvalError("tensor has no populated gradient");
    return impl_->grad;
  }
  // Allocates (zero-filled) on first use. Only backward passes should call it.
  std::vector<double>& grad_buffer() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.clear(); }

  // Element accessors for tests and cold paths.
  double at(std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }
  double at4(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return impl_->data[static_cast<std::size_t>(
        ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w)];
  }

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  Tensor(Shape shape, double fill, bool requires_grad) {
    impl_ = std::make_shared<Impl>();
    std::int64_t n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<std::size_t>(n), fill);
    impl_->requires_grad = requires_grad;
  }

  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until populated by a backward pass
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

namespace detail {
inline int& no_grad_depth() {
  thread_local int depth = 0;
  return depth;
}
inline std::uint64_t& op_exec_counter() {
  thread_local std::uint64_t n = 0;
  return n;
}
}  // namespace detail

/// Suppresses tape recording for the enclosed scope (evaluation paths,
/// finite-difference probes, mask decisions).
struct NoGrad {
  NoGrad() { ++detail::no_grad_depth(); }
  ~NoGrad() { --detail::no_grad_depth(); }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

/// Ordered record of executed differentiable operations. Constructing a Tape
/// makes it the active recorder for the current thread; destruction restores
/// the previous one. Tapes are not shared across threads.
class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  Tape() : prev_(active_ref()) { active_ref() = this; }
  ~Tape() { active_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() {
    return detail::no_grad_depth() > 0 ? nullptr : active_ref();
  }

  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(inputs), std::move(output),
                          std::move(backward)});
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse replay of adjoints from a scalar output. Every reachable
  /// requires_grad tensor ends up with a populated grad.
  void backward(Tensor loss) {
    if (loss.size() != 1)
      throw ShapeError("backward expects a scalar (numel==1) tensor");
    if (!std::isfinite(loss.at(0)))
      throw NumericError("backward called on non-finite loss");
    loss.grad_buffer()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output.has_grad()) it->backward();
    }
  }

 private:
  static Tape*& active_ref() {
    thread_local Tape* t = nullptr;
    return t;
  }
  std::vector<Node> nodes_;
  Tape* prev_;
};

namespace detail {

inline bool should_record(std::initializer_list<const Tensor*> ins) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

inline void record(const char* op, std::vector<Tensor> inputs, Tensor& output,
                   std::function<void()> backward) {
  ++op_exec_counter();
  output.set_requires_grad(true);
  Tape::active()->record(op, std::move(inputs), output, std::move(backward));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Broadcasting helpers

namespace detail {

// Right-aligned broadcast: pads the shorter rank with leading 1s; each axis
// must match or be 1 on one side.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    int ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `s` right-aligned into rank r, with 0 stride on broadcast axes.
inline std::vector<std::int64_t> broadcast_strides(const Shape& s, std::size_t r,
                                                   const Shape& out) {
  std::vector<std::int64_t> st(r, 0);
  std::int64_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    std::size_t oi = i + (r - s.size());
    st[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

template <class F>
inline void for_each_broadcast(const Shape& out, const Shape& sa,
                               const Shape& sb, F&& f) {
  std::size_t r = out.size();
  auto sta = broadcast_strides(sa, r, out);
  auto stb = broadcast_strides(sb, r, out);
  std::vector<int> idx(r, 0);
  std::int64_t ia = 0, ib = 0, io = 0;
  std::int64_t total = shape_numel(out);
  for (std::int64_t k = 0; k < total; ++k) {
    f(io, ia, ib);
    ++io;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sta[d];
      ib += stb[d];
      if (idx[d] < out[d]) break;
      idx[d] = 0;
      ia -= sta[d] * out[d];
      ib -= stb[d] * out[d];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops

namespace detail {

template <class FwdF, class BwdF>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdF fwd,
                 BwdF bwd) {
  const bool same = a.shape() == b.shape();
  Shape out_shape = same ? a.shape() : broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::zeros(out_shape);
  double* o = out.mutable_data();
  const double* pa = a.data();
  const double* pb = b.data();
  if (same) {
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) o[i] = fwd(pa[i], pb[i]);
  } else if (b.size() == 1) {
    const std::int64_t n = out.size();
    const double s = pb[0];
    for (std::int64_t i = 0; i < n; ++i) o[i] = fwd(pa[i], s);
  } else {
    for_each_broadcast(out_shape, a.shape(), b.shape(),
                       [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
                         o[io] = fwd(pa[ia], pb[ib]);
                       });
  }
  if (should_record({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    record(name, {a, b}, out, [ac, bc, oc, bwd]() mutable {
      const std::vector<double>& go = oc.grad();
      double* ga = ac.requires_grad() ? ac.grad_buffer().data() : nullptr;
      double* gb = bc.requires_grad() ? bc.grad_buffer().data() : nullptr;
      const double* pa = ac.data();
      const double* pb = bc.data();
      if (ac.shape() == bc.shape()) {
        const std::int64_t n = oc.size();
        for (std::int64_t i = 0; i < n; ++i) {
          auto [da, db] = bwd(pa[i], pb[i]);
          if (ga) ga[i] += go[i] * da;
          if (gb) gb[i] += go[i] * db;
        }
      } else {
        for_each_broadcast(oc.shape(), ac.shape(), bc.shape(),
                           [&](std::int64_t io, std::int64_t ia,
                               std::int64_t ib) {
                             auto [da, db] = bwd(pa[ia], pb[ib]);
                             if (ga) ga[ia] += go[io] * da;
                             if (gb) gb[ib] += go[io] * db;
                           });
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair<double, double>{y, x}; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y) {
        return std::pair<double, double>{1.0 / y, -x / (y * y)};
      });
}
// Ties propagate the gradient to the first argument.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "min", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) {
        return x <= y ? std::pair<double, double>{1.0, 0.0}
                      : std::pair<double, double>{0.0, 1.0};
      });
}
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "max", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) {
        return x >= y ? std::pair<double, double>{1.0, 0.0}
                      : std::pair<double, double>{0.0, 1.0};
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

namespace detail {
template <class FwdF, class BwdF>
Tensor unary_op(const char* name, const Tensor& x, FwdF f, BwdF df) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.mutable_data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
  if (should_record({&x})) {
    Tensor xc = x, oc = out;
    record(name, {x}, out, [xc, oc, df]() mutable {
      const std::vector<double>& go = oc.grad();
      double* gx = xc.grad_buffer().data();
      const double* px = xc.data();
      const std::int64_t n = xc.size();
      for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i] * df(px[i]);
    });
  }
  return out;
}
}  // namespace detail

/// Builds a recorded elementwise op from value and derivative functions.
inline Tensor custom_unary(const char* name, const Tensor& x,
                           const std::function<double(double)>& f,
                           const std::function<double(double)>& df) {
  return detail::unary_op(name, x, f, df);
}

inline Tensor neg(const Tensor& x) {
  return detail::unary_op("neg", x, [](double v) { return -v; },
                          [](double) { return -1.0; });
}
inline Tensor abs(const Tensor& x) {
  return detail::unary_op("abs", x, [](double v) { return std::fabs(v); },
                          [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}
inline Tensor exp(const Tensor& x) {
  return detail::unary_op("exp", x, [](double v) { return std::exp(v); },
                          [](double v) { return std::exp(v); });
}
inline Tensor log(const Tensor& x) {
  return detail::unary_op("log", x, [](double v) { return std::log(v); },
                          [](double v) { return 1.0 / v; });
}
inline Tensor sqrt(const Tensor& x) {
  return detail::unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double v) { return v > 0 ? 0.5 / std::sqrt(v) : 0.0; });
}
inline Tensor square(const Tensor& x) {
  return detail::unary_op("square", x, [](double v) { return v * v; },
                          [](double v) { return 2.0 * v; });
}
inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double v) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
}
inline Tensor relu(const Tensor& x) {
  return detail::unary_op("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                          [](double v) { return v > 0 ? 1.0 : 0.0; });
}

// Scalar convenience overloads.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor operator+(double s, const Tensor& a) { return add(Tensor::scalar(s), a); }
inline Tensor operator-(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor operator-(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator*(double s, const Tensor& a) { return mul(Tensor::scalar(s), a); }
inline Tensor operator/(const Tensor& a, double s) { return div(a, Tensor::scalar(s)); }
inline Tensor operator/(double s, const Tensor& a) { return div(Tensor::scalar(s), a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  const double* px = x.data();
  double acc = 0.0;
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) acc += px[i];
  out.mutable_data()[0] = acc;
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("sum", {x}, out, [xc, oc]() mutable {
      const double g = oc.grad()[0];
      double* gx = xc.grad_buffer().data();
      const std::int64_t n = xc.size();
      for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  return sum(x) / static_cast<double>(x.size());
}

namespace detail {
inline void reduce_axis_dims(const Shape& s, int axis, std::int64_t& outer,
                             std::int64_t& extent, std::int64_t& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("reduce: invalid axis " + std::to_string(axis) +
                     " for shape " + shape_str(s));
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
inline Shape reduced_shape(const Shape& s, int axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + axis);
    if (out.empty()) out = {1};
  }
  return out;
}
}  // namespace detail

inline Tensor sum(const Tensor& x, int axis, bool keepdim = false) {
  std::int64_t outer, extent, inner;
  detail::reduce_axis_dims(x.shape(), axis, outer, extent, inner);
  Tensor out = Tensor::zeros(detail::reduced_shape(x.shape(), axis, keepdim));
  const double* px = x.data();
  double* po = out.mutable_data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t e = 0; e < extent; ++e) {
      const double* row = px + (o * extent + e) * inner;
      double* orow = po + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) orow[i] += row[i];
    }
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("sum_axis", {x}, out, [xc, oc, outer, extent, inner]() mutable {
      const double* go = oc.grad().data();
      double* gx = xc.grad_buffer().data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t e = 0; e < extent; ++e) {
          double* row = gx + (o * extent + e) * inner;
          const double* orow = go + o * inner;
          for (std::int64_t i = 0; i < inner; ++i) row[i] += orow[i];
        }
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x, int axis, bool keepdim = false) {
  std::int64_t extent = x.shape()[axis];
  return sum(x, axis, keepdim) / static_cast<double>(extent);
}

/// Minimum along an axis together with the argmin indices. Ties resolve to
/// the smallest index; gradient flows only into the selected elements.
struct MinReduceResult {
  Tensor values;   // reduced tensor, differentiable
  Tensor indices;  // same shape, integer-valued doubles, never differentiable
};

inline MinReduceResult reduce_min(const Tensor& x, int axis,
                                  bool keepdim = false) {
  std::int64_t outer, extent, inner;
  detail::reduce_axis_dims(x.shape(), axis, outer, extent, inner);
  Shape os = detail::reduced_shape(x.shape(), axis, keepdim);
  Tensor vals = Tensor::zeros(os);
  Tensor idxs = Tensor::zeros(os);
  const double* px = x.data();
  double* pv = vals.mutable_data();
  double* pi = idxs.mutable_data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      double best = px[(o * extent) * inner + i];
      std::int64_t arg = 0;
      for (std::int64_t e = 1; e < extent; ++e) {
        double v = px[(o * extent + e) * inner + i];
        if (v < best) {
          best = v;
          arg = e;
        }
      }
      pv[o * inner + i] = best;
      pi[o * inner + i] = static_cast<double>(arg);
    }
  if (detail::should_record({&x})) {
    Tensor xc = x, vc = vals, ic = idxs;
    detail::record("reduce_min", {x}, vals,
                   [xc, vc, ic, outer, extent, inner]() mutable {
                     const double* gv = vc.grad().data();
                     const double* pi = ic.data();
                     double* gx = xc.grad_buffer().data();
                     for (std::int64_t o = 0; o < outer; ++o)
                       for (std::int64_t i = 0; i < inner; ++i) {
                         auto e = static_cast<std::int64_t>(pi[o * inner + i]);
                         gx[(o * extent + e) * inner + i] += gv[o * inner + i];
                       }
                   });
  }
  return {vals, idxs};
}

// ---------------------------------------------------------------------------
// Shape ops

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  Tensor out = Tensor::from_data(std::move(shape), x.values());
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("reshape", {x}, out, [xc, oc]() mutable {
      const std::vector<double>& go = oc.grad();
      double* gx = xc.grad_buffer().data();
      const std::int64_t n = xc.size();
      for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw ShapeError("concat: invalid axis");
  Shape os = s0;
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank())
      throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < p.rank(); ++d)
      if (d != axis && p.dim(d) != s0[d])
        throw ShapeError("concat: extent mismatch off the concat axis");
    total += p.dim(axis);
  }
  os[axis] = total;
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Tensor out = Tensor::zeros(os);
  double* po = out.mutable_data();
  std::int64_t off = 0;
  for (const Tensor& p : parts) {
    const double* pp = p.data();
    const std::int64_t ext = p.dim(axis);
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * total + off) * inner, pp + o * ext * inner,
                  static_cast<std::size_t>(ext * inner) * sizeof(double));
    off += ext;
  }
  bool rec = Tape::active() != nullptr;
  if (rec) {
    rec = false;
    for (const Tensor& p : parts)
      if (p.requires_grad()) rec = true;
  }
  if (rec) {
    std::vector<Tensor> ins = parts;
    Tensor oc = out;
    detail::record("concat", ins, out, [ins, oc, outer, inner, total]() mutable {
      const double* go = oc.grad().data();
      std::int64_t off = 0;
      for (Tensor& p : ins) {
        const std::int64_t ext = p.size() / (outer * inner);
        if (p.requires_grad()) {
          double* gp = p.grad_buffer().data();
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = go + (o * total + off) * inner;
            double* dst = gp + o * ext * inner;
            for (std::int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
          }
        }
        off += ext;
      }
    });
  }
  return out;
}

inline Tensor slice(const Tensor& x, int axis, int start, int len) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("slice: invalid axis");
  if (start < 0 || len <= 0 || start + len > s[axis])
    throw ShapeError("slice: range out of bounds");
  Shape os = s;
  os[axis] = len;
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::int64_t ext = s[axis];
  Tensor out = Tensor::zeros(os);
  double* po = out.mutable_data();
  const double* px = x.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(po + o * len * inner, px + (o * ext + start) * inner,
                static_cast<std::size_t>(len * inner) * sizeof(double));
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("slice", {x}, out,
                   [xc, oc, outer, inner, ext, start, len]() mutable {
                     const double* go = oc.grad().data();
                     double* gx = xc.grad_buffer().data();
                     for (std::int64_t o = 0; o < outer; ++o) {
                       double* dst = gx + (o * ext + start) * inner;
                       const double* src = go + o * len * inner;
                       for (std::int64_t i = 0; i < len * inner; ++i)
                         dst[i] += src[i];
                     }
                   });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d

/// Cross-correlation of [N,C,H,W] with [O,C,kh,kw], zero padding, odd kernel.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, int stride, int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d expects rank-4 input and kernel");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2),
            W = input.dim(3);
  const int O = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2),
            KW = kernel.dim(3);
  if (KC != C)
    throw ShapeError("conv2d: kernel channels " + std::to_string(KC) +
                     " do not match input channels " + std::to_string(C));
  if (KH % 2 == 0 || KW % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O))
    throw ShapeError("conv2d: bias must be [O]");
  const int OH = (H + 2 * padding - KH) / stride + 1;
  const int OW = (W + 2 * padding - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: empty output");

  Tensor out = Tensor::zeros({N, O, OH, OW});
  double* po = out.mutable_data();
  const double* pi = input.data();
  const double* pk = kernel.data();
  const double* pb = bias.defined() ? bias.data() : nullptr;

  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < O; ++oc) {
      double* ochan = po + (static_cast<std::int64_t>(n) * O + oc) * OH * OW;
      if (pb) {
        const double b = pb[oc];
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i)
          ochan[i] = b;
      }
      for (int ic = 0; ic < C; ++ic) {
        const double* ichan =
            pi + (static_cast<std::int64_t>(n) * C + ic) * H * W;
        const double* kk = pk + (static_cast<std::int64_t>(oc) * C + ic) * KH * KW;
        for (int ky = 0; ky < KH; ++ky) {
          for (int kx = 0; kx < KW; ++kx) {
            const double w = kk[ky * KW + kx];
            if (w == 0.0) continue;
            // valid ox range for this kx (independent of oy)
            int ox0 = 0, ox1 = OW;
            while (ox0 < OW && ox0 * stride + kx - padding < 0) ++ox0;
            while (ox1 > ox0 && (ox1 - 1) * stride + kx - padding >= W) --ox1;
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride + ky - padding;
              if (iy < 0 || iy >= H) continue;
              const double* irow = ichan + static_cast<std::int64_t>(iy) * W +
                                   (static_cast<std::int64_t>(ox0) * stride + kx - padding);
              double* orow = ochan + static_cast<std::int64_t>(oy) * OW;
              if (stride == 1) {
                for (int ox = ox0; ox < ox1; ++ox)
                  orow[ox] += w * irow[ox - ox0];
              } else {
                for (int ox = ox0; ox < ox1; ++ox)
                  orow[ox] += w * irow[static_cast<std::int64_t>(ox - ox0) * stride];
              }
            }
          }
        }
      }
    }
  }

  const bool rec = bias.defined()
                       ? detail::should_record({&input, &kernel, &bias})
                       : detail::should_record({&input, &kernel});
  if (rec) {
    Tensor ic = input, kc = kernel, bc = bias, oc2 = out;
    std::vector<Tensor> ins = {input, kernel};
    if (bias.defined()) ins.push_back(bias);
    detail::record("conv2d", ins, out, [ic, kc, bc, oc2, stride, padding]() mutable {
      const int N = ic.dim(0), C = ic.dim(1), H = ic.dim(2), W = ic.dim(3);
      const int O = kc.dim(0), KH = kc.dim(2), KW = kc.dim(3);
      const int OH = oc2.dim(2), OW = oc2.dim(3);
      const double* go = oc2.grad().data();
      const double* pi = ic.data();
      const double* pk = kc.data();
      double* gi = ic.requires_grad() ? ic.grad_buffer().data() : nullptr;
      double* gk = kc.requires_grad() ? kc.grad_buffer().data() : nullptr;
      double* gb = (bc.defined() && bc.requires_grad())
                       ? bc.grad_buffer().data()
                       : nullptr;
      for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < O; ++oc) {
          const double* gchan =
              go + (static_cast<std::int64_t>(n) * O + oc) * OH * OW;
          if (gb) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i)
              acc += gchan[i];
            gb[oc] += acc;
          }
          for (int ic2 = 0; ic2 < C; ++ic2) {
            const double* ichan =
                pi + (static_cast<std::int64_t>(n) * C + ic2) * H * W;
            double* gichan =
                gi ? gi + (static_cast<std::int64_t>(n) * C + ic2) * H * W
                   : nullptr;
            const double* kk =
                pk + (static_cast<std::int64_t>(oc) * C + ic2) * KH * KW;
            double* gkk =
                gk ? gk + (static_cast<std::int64_t>(oc) * C + ic2) * KH * KW
                   : nullptr;
            for (int ky = 0; ky < KH; ++ky) {
              for (int kx = 0; kx < KW; ++kx) {
                const double w = kk[ky * KW + kx];
                double wacc = 0.0;
                int ox0 = 0, ox1 = OW;
                while (ox0 < OW && ox0 * stride + kx - padding < 0) ++ox0;
                while (ox1 > ox0 && (ox1 - 1) * stride + kx - padding >= W)
                  --ox1;
                for (int oy = 0; oy < OH; ++oy) {
                  const int iy = oy * stride + ky - padding;
                  if (iy < 0 || iy >= H) continue;
                  const std::int64_t ibase =
                      static_cast<std::int64_t>(iy) * W +
                      (static_cast<std::int64_t>(ox0) * stride + kx - padding);
                  const double* __restrict__ grow =
                      gchan + static_cast<std::int64_t>(oy) * OW;
                  if (gkk) {
                    const double* __restrict__ irow = ichan + ibase;
                    const double* __restrict__ gro = grow + ox0;
                    const int len = ox1 - ox0;
                    if (stride == 1) {
                      // four independent accumulators so the reduction pipelines
                      double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                      int i = 0;
                      for (; i + 4 <= len; i += 4) {
                        a0 += gro[i] * irow[i];
                        a1 += gro[i + 1] * irow[i + 1];
                        a2 += gro[i + 2] * irow[i + 2];
                        a3 += gro[i + 3] * irow[i + 3];
                      }
                      for (; i < len; ++i) a0 += gro[i] * irow[i];
                      wacc += (a0 + a1) + (a2 + a3);
                    } else {
                      for (int i = 0; i < len; ++i)
                        wacc += gro[i] * irow[static_cast<std::int64_t>(i) * stride];
                    }
                  }
                  if (gichan) {
                    double* __restrict__ girow = gichan + ibase;
                    if (stride == 1) {
                      for (int ox = ox0; ox < ox1; ++ox)
                        girow[ox - ox0] += w * grow[ox];
                    } else {
                      for (int ox = ox0; ox < ox1; ++ox)
                        girow[static_cast<std::int64_t>(ox - ox0) * stride] +=
                            w * grow[ox];
                    }
                  }
                }
                if (gkk) gkk[ky * KW + kx] += wacc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1,
                     int padding = 0) {
  return conv2d(input, kernel, Tensor(), stride, padding);
}

// ---------------------------------------------------------------------------
// Pooling and resizing

/// Adaptive average pooling to an (oh, ow) grid; cell [i] covers input rows
/// [floor(i*H/oh), floor((i+1)*H/oh)).
inline Tensor adaptive_avg_pool(const Tensor& x, int oh, int ow) {
  if (x.rank() != 4) throw ShapeError("adaptive_avg_pool expects rank 4");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (oh <= 0 || ow <= 0 || oh > H || ow > W)
    throw ShapeError("adaptive_avg_pool: bad output grid");
  Tensor out = Tensor::zeros({N, C, oh, ow});
  const double* px = x.data();
  double* po = out.mutable_data();
  auto lo = [](int i, int n, int m) { return (i * n) / m; };
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* ch = px + (static_cast<std::int64_t>(n) * C + c) * H * W;
      double* och = po + (static_cast<std::int64_t>(n) * C + c) * oh * ow;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          int y0 = lo(i, H, oh), y1 = lo(i + 1, H, oh);
          int x0 = lo(j, W, ow), x1 = lo(j + 1, W, ow);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) acc += ch[y * W + xx];
          och[i * ow + j] = acc / ((y1 - y0) * (x1 - x0));
        }
    }
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("adaptive_avg_pool", {x}, out, [xc, oc, oh, ow]() mutable {
      const int N = xc.dim(0), C = xc.dim(1), H = xc.dim(2), W = xc.dim(3);
      const double* go = oc.grad().data();
      double* gx = xc.grad_buffer().data();
      auto lo = [](int i, int n, int m) { return (i * n) / m; };
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* gch = gx + (static_cast<std::int64_t>(n) * C + c) * H * W;
          const double* goch =
              go + (static_cast<std::int64_t>(n) * C + c) * oh * ow;
          for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
              int y0 = lo(i, H, oh), y1 = lo(i + 1, H, oh);
              int x0 = lo(j, W, ow), x1 = lo(j + 1, W, ow);
              const double g = goch[i * ow + j] / ((y1 - y0) * (x1 - x0));
              for (int y = y0; y < y1; ++y)
                for (int xx = x0; xx < x1; ++xx) gch[y * W + xx] += g;
            }
        }
    });
  }
  return out;
}

inline Tensor resize_nearest(const Tensor& x, int oh, int ow) {
  if (x.rank() != 4) throw ShapeError("resize_nearest expects rank 4");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = Tensor::zeros({N, C, oh, ow});
  std::vector<int> ys(oh), xs(ow);
  for (int i = 0; i < oh; ++i)
    ys[i] = std::min(H - 1, static_cast<int>((i + 0.5) * H / oh));
  for (int j = 0; j < ow; ++j)
    xs[j] = std::min(W - 1, static_cast<int>((j + 0.5) * W / ow));
  const double* px = x.data();
  double* po = out.mutable_data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const double* ch = px + nc * H * W;
    double* och = po + nc * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) och[i * ow + j] = ch[ys[i] * W + xs[j]];
  }
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("resize_nearest", {x}, out, [xc, oc, ys, xs, oh, ow]() mutable {
      const int N = xc.dim(0), C = xc.dim(1), H = xc.dim(2), W = xc.dim(3);
      const double* go = oc.grad().data();
      double* gx = xc.grad_buffer().data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        double* gch = gx + nc * H * W;
        const double* goch = go + nc * oh * ow;
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) gch[ys[i] * W + xs[j]] += goch[i * ow + j];
      }
    });
  }
  return out;
}

inline Tensor resize_bilinear(const Tensor& x, int oh, int ow) {
  if (x.rank() != 4) throw ShapeError("resize_bilinear expects rank 4");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = Tensor::zeros({N, C, oh, ow});
  // source coordinate per output index, half-pixel convention, clamped
  std::vector<int> y0(oh), x0(ow);
  std::vector<double> wy(oh), wx(ow);
  for (int i = 0; i < oh; ++i) {
    double sy = (i + 0.5) * H / oh - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
    y0[i] = std::min(H - 2 >= 0 ? H - 2 : 0, static_cast<int>(std::floor(sy)));
    wy[i] = sy - y0[i];
  }
  for (int j = 0; j < ow; ++j) {
    double sx = (j + 0.5) * W / ow - 0.5;
    sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
    x0[j] = std::min(W - 2 >= 0 ? W - 2 : 0, static_cast<int>(std::floor(sx)));
    wx[j] = sx - x0[j];
  }
  const double* px = x.data();
  double* po = out.mutable_data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const double* ch = px + nc * H * W;
    double* och = po + nc * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const int ya = y0[i], yb = std::min(H - 1, ya + 1);
      const double fy = wy[i];
      for (int j = 0; j < ow; ++j) {
        const int xa = x0[j], xb = std::min(W - 1, xa + 1);
        const double fx = wx[j];
        och[i * ow + j] = (1 - fy) * ((1 - fx) * ch[ya * W + xa] + fx * ch[ya * W + xb]) +
                          fy * ((1 - fx) * ch[yb * W + xa] + fx * ch[yb * W + xb]);
      }
    }
  }
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("resize_bilinear", {x}, out,
                   [xc, oc, y0, x0, wy, wx, oh, ow]() mutable {
                     const int N = xc.dim(0), C = xc.dim(1), H = xc.dim(2),
                               W = xc.dim(3);
                     const double* go = oc.grad().data();
                     double* gx = xc.grad_buffer().data();
                     for (std::int64_t nc = 0;
                          nc < static_cast<std::int64_t>(N) * C; ++nc) {
                       double* gch = gx + nc * H * W;
                       const double* goch = go + nc * oh * ow;
                       for (int i = 0; i < oh; ++i) {
                         const int ya = y0[i], yb = std::min(H - 1, ya + 1);
                         const double fy = wy[i];
                         for (int j = 0; j < ow; ++j) {
                           const int xa = x0[j], xb = std::min(W - 1, xa + 1);
                           const double fx = wx[j];
                           const double g = goch[i * ow + j];
                           gch[ya * W + xa] += g * (1 - fy) * (1 - fx);
                           gch[ya * W + xb] += g * (1 - fy) * fx;
                           gch[yb * W + xa] += g * fy * (1 - fx);
                           gch[yb * W + xb] += g * fy * fx;
                         }
                       }
                     }
                   });
  }
  return out;
}

/// 3x3 box mean with valid-region statistics: border pixels average over the
/// in-bounds part of their neighborhood.
inline Tensor local_mean3x3(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("local_mean3x3 expects rank 4");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.mutable_data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const double* ch = px + nc * H * W;
    double* och = po + nc * H * W;
    for (int y = 0; y < H; ++y) {
      const int ya = std::max(0, y - 1), yb = std::min(H - 1, y + 1);
      for (int xx = 0; xx < W; ++xx) {
        const int xa = std::max(0, xx - 1), xb = std::min(W - 1, xx + 1);
        double acc = 0.0;
        for (int yy = ya; yy <= yb; ++yy)
          for (int x2 = xa; x2 <= xb; ++x2) acc += ch[yy * W + x2];
        och[y * W + xx] = acc / ((yb - ya + 1) * (xb - xa + 1));
      }
    }
  }
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("local_mean3x3", {x}, out, [xc, oc]() mutable {
      const int N = xc.dim(0), C = xc.dim(1), H = xc.dim(2), W = xc.dim(3);
      const double* go = oc.grad().data();
      double* gx = xc.grad_buffer().data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        double* gch = gx + nc * H * W;
        const double* goch = go + nc * H * W;
        for (int y = 0; y < H; ++y) {
          const int ya = std::max(0, y - 1), yb = std::min(H - 1, y + 1);
          for (int xx = 0; xx < W; ++xx) {
            const int xa = std::max(0, xx - 1), xb = std::min(W - 1, xx + 1);
            const double g = goch[y * W + xx] / ((yb - ya + 1) * (xb - xa + 1));
            for (int yy = ya; yy <= yb; ++yy)
              for (int x2 = xa; x2 <= xb; ++x2) gch[yy * W + x2] += g;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pixel gathering (contrastive pairs)

/// Gathers feature columns at integer pixel locations: x is [1,C,H,W], the
/// result is [C,M] with column m = x[:, ys[m], xs[m]].
inline Tensor gather_pixels(const Tensor& x, const std::vector<int>& ys,
                            const std::vector<int>& xs) {
  if (x.rank() != 4 || x.dim(0) != 1)
    throw ShapeError("gather_pixels expects [1,C,H,W]");
  if (ys.size() != xs.size()) throw ShapeError("gather_pixels: ys/xs length mismatch");
  const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int M = static_cast<int>(ys.size());
  for (int m = 0; m < M; ++m)
    if (ys[m] < 0 || ys[m] >= H || xs[m] < 0 || xs[m] >= W)
      throw ShapeError("gather_pixels: index out of bounds");
  Tensor out = Tensor::zeros({C, std::max(M, 1)});
  if (M == 0) return out;
  const double* px = x.data();
  double* po = out.mutable_data();
  for (int c = 0; c < C; ++c) {
    const double* ch = px + static_cast<std::int64_t>(c) * H * W;
    for (int m = 0; m < M; ++m) po[c * M + m] = ch[ys[m] * W + xs[m]];
  }
  if (detail::should_record({&x})) {
    Tensor xc = x, oc = out;
    detail::record("gather_pixels", {x}, out, [xc, oc, ys, xs]() mutable {
      const int C = xc.dim(1), H = xc.dim(2), W = xc.dim(3);
      const int M = static_cast<int>(ys.size());
      const double* go = oc.grad().data();
      double* gx = xc.grad_buffer().data();
      for (int c = 0; c < C; ++c) {
        double* gch = gx + static_cast<std::int64_t>(c) * H * W;
        for (int m = 0; m < M; ++m) gch[ys[m] * W + xs[m]] += go[c * M + m];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::int64_t worst_index = -1;
};

/// Compares the analytic gradient of a scalar-valued function against central
/// finite differences at `point`. Relative error uses a small floor so that
/// near-zero gradients are compared absolutely.
inline GradCheckReport grad_check(
    const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
    double epsilon) {
  if (epsilon <= 0) throw DomainError("grad_check: epsilon must be positive");
  Tensor x = Tensor::from_data(point.shape(), point.values(), true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor y = fn(x);
    if (y.size() != 1) throw ShapeError("grad_check: function must return a scalar");
    if (!std::isfinite(y.at(0)))
      throw EvalError("grad_check: non-finite forward value");
    tape.backward(y);
    analytic = x.grad();
  }
  GradCheckReport rep;
  NoGrad ng;
  std::vector<double> probe = point.values();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + epsilon;
    double fp = fn(Tensor::from_data(point.shape(), probe)).at(0);
    probe[i] = saved - epsilon;
    double fm = fn(Tensor::from_data(point.shape(), probe)).at(0);
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw EvalError("grad_check: non-finite probe value");
    const double fd = (fp - fm) / (2.0 * epsilon);
    const double a = analytic[i];
    const double abs_err = std::fabs(a - fd);
    const double rel =
        abs_err / std::max({std::fabs(a), std::fabs(fd), 1e-4});
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = static_cast<std::int64_t>(i);
    }
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization: magic "DFT1", rank u32, extents u32[], dtype u32 (1 = f64),
// then little-endian 64-bit floats.

namespace detail {
static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
inline void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}
}  // namespace detail

inline constexpr std::uint32_t kDtypeF64 = 1;

inline void save_tensor(const Tensor& t, std::ostream& os) {
  os.write("DFT1", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i)
    detail::write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  detail::write_u32(os, kDtypeF64);
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i) detail::write_f64(os, p[i]);
}

inline void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot open for write: " + path);
  save_tensor(t, f);
  if (!f) throw EvalError("write failed: " + path);
}

inline Tensor load_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DFT1", 4) != 0)
    throw EvalError("bad tensor file magic");
  std::uint32_t rank = detail::read_u32(is);
  if (rank == 0 || rank > 8) throw EvalError("bad tensor rank");
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<int>(detail::read_u32(is));
  if (detail::read_u32(is) != kDtypeF64) throw EvalError("unsupported dtype tag");
  std::int64_t n = shape_numel(shape);
  std::vector<double> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = detail::read_f64(is);
  if (!is) throw EvalError("truncated tensor file");
  return Tensor::from_data(std::move(shape), std::move(data));
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot open tensor file: " + path);
  return load_tensor(f);
}

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64); identical streams on every platform.

struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  /// Uniform integer in [0,n).
  int uniform_int(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0x632be59bd9b4e019ULL * (stream + 1)));
  return r.next();
}

inline Tensor random_uniform(Shape shape, Rng& rng, double lo = 0.0,
                             double hi = 1.0) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(d));
}

inline std::uint64_t op_execution_count() { return detail::op_exec_counter(); }

}  // namespace selfdepth
