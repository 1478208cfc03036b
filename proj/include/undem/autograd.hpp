#ifndef UNDEM_AUTOGRAD_HPP
#define UNDEM_AUTOGRAD_HPP

// Define-by-run reverse-mode differentiation over NCHW tensors.
//
// Every op returns a Var whose node remembers its inputs and a closure that
// pushes the node's gradient back into them. Parameters are long-lived leaf
// Vars; graphs are released when the last Var referencing them goes away.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "undem/tensor.hpp"

namespace undem {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Thread-local switch; while disabled, ops record no graph.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Scalar read-out for single-element tensors.
  T item() const {
    if (node_->value.size() != 1) throw std::logic_error("item() on non-scalar " + shape().str());
    return node_->value[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& v : inputs) node->inputs.push_back(v.node());
      node->backward = std::move(fn);
    }
  }
  return Var<T>(std::move(node));
}

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, w).
inline std::pair<int, int> valid_columns(int w, int stride, int pad, int kx, int ow) {
  const int off = kx - pad;
  const int lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const int hi = w - off <= 0 ? 0 : std::min(ow, (w - off + stride - 1) / stride);
  return {std::min(lo, hi), hi};
}

// cols is [channels*k*k, out_h*out_w]
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, T* cols) {
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * p;
        const auto [lo, hi] = valid_columns(w, stride, pad, kx, ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(iy) * w + (kx - pad);
          std::fill(dst, dst + lo, T(0));
          if (stride == 1) {
            std::copy(xc + base + lo, xc + base + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = xc[base + static_cast<std::ptrdiff_t>(ox) * stride];
          }
          std::fill(dst + hi, dst + ow, T(0));
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* cols, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, T* x) {
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * p;
        const auto [lo, hi] = valid_columns(w, stride, pad, kx, ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(iy) * w + (kx - pad);
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) xc[base + ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) xc[base + static_cast<std::ptrdiff_t>(ox) * stride] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F forward, D derivative) {
  Tensor<T> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return make_result<T>(std::move(out), {x}, [derivative](Node<T>& self) {
    auto& src = *self.inputs[0];
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * derivative(src.value[i], self.value[i]);
  });
}

}  // namespace detail

/// Reverse sweep from a single-element root; gradients accumulate into leaves.
template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw std::logic_error("backward() requires a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

/// Leaf copy that blocks gradient flow.
template <typename T>
Var<T> detach(const Var<T>& x) {
  return Var<T>(x.value(), false);
}

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

// --- elementwise -----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) throw std::invalid_argument("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return detail::make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) throw std::invalid_argument("sub: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return detail::make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = self.inputs[k];
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      const T sign = k == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

/// a * x + b elementwise with scalar a, b.
template <typename T>
Var<T> affine(const Var<T>& x, T a, T b) {
  return detail::unary<T>(x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return v * v; }, [](T in, T) { return T(2) * in; });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return std::abs(v); },
                          [](T in, T) { return in > T(0) ? T(1) : (in < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return v > T(0) ? v : T(0); }, [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::unary<T>(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                          [slope](T in, T) { return in > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return std::tanh(v); }, [](T, T out) { return T(1) - out * out; });
}

/// Clamp into [lo, hi]; gradient passes only strictly inside the range.
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return detail::unary<T>(x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
                          [lo, hi](T in, T) { return (in > lo && in < hi) ? T(1) : T(0); });
}

// --- reductions ------------------------------------------------------------

/// Mean over every element, as a [1,1,1,1] tensor.
template <typename T>
Var<T> mean(const Var<T>& x) {
  const auto& v = x.value();
  long double acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i];
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc / static_cast<long double>(v.size())));
  return detail::make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& src = *self.inputs[0];
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    const T d = self.grad[0] / static_cast<T>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

/// Per-sample mean over (c, h, w): [N,C,H,W] -> [N,1,1,1].
template <typename T>
Var<T> sample_mean(const Var<T>& x) {
  const auto& v = x.value();
  const int n = v.n();
  const std::size_t per = v.size() / static_cast<std::size_t>(n);
  Tensor<T> out(Shape{n, 1, 1, 1});
  for (int i = 0; i < n; ++i) {
    long double acc = 0;
    const T* s = v.sample(i);
    for (std::size_t j = 0; j < per; ++j) acc += s[j];
    out[i] = static_cast<T>(acc / static_cast<long double>(per));
  }
  return detail::make_result<T>(std::move(out), {x}, [per](Node<T>& self) {
    auto& src = *self.inputs[0];
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    for (int i = 0; i < g.n(); ++i) {
      const T d = self.grad[i] / static_cast<T>(per);
      T* gs = g.sample(i);
      for (std::size_t j = 0; j < per; ++j) gs[j] += d;
    }
  });
}

/// Sum of scalars.
template <typename T>
Var<T> sum(const std::vector<Var<T>>& terms) {
  if (terms.empty()) throw std::invalid_argument("sum: no terms");
  Var<T> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

// --- structural ------------------------------------------------------------

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || !sa.spatially_equal(sb)) {
    throw std::invalid_argument("concat_channels: misaligned " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane();
  const std::size_t pb = sb.c * sb.plane();
  for (int i = 0; i < sa.n; ++i) {
    std::copy_n(a.value().sample(i), pa, out.sample(i));
    std::copy_n(b.value().sample(i), pb, out.sample(i) + pa);
  }
  return detail::make_result<T>(std::move(out), {a, b}, [pa, pb](Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      const std::size_t len = k == 0 ? pa : pb;
      const std::size_t off = k == 0 ? 0 : pa;
      for (int i = 0; i < g.n(); ++i) {
        const T* src = self.grad.sample(i) + off;
        T* dst = g.sample(i);
        for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
      }
    }
  });
}

// --- convolution -----------------------------------------------------------

/// 2-D cross-correlation with zero padding. weight is [Cout, Cin, k, k]; bias [1, Cout, 1, 1] or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape sx = x.shape();
  const Shape sw = weight.shape();
  if (sx.c != sw.c) throw std::invalid_argument("conv2d: input channels " + sx.str() + " vs weight " + sw.str());
  const int k = sw.h;
  const int oh = detail::conv_out(sx.h, k, stride, pad);
  const int ow = detail::conv_out(sx.w, k, stride, pad);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: input " + sx.str() + " too small for kernel");
  const int cout = sw.n;
  const int kk = sx.c * k * k;
  const int p = oh * ow;

  Tensor<T> out(Shape{sx.n, cout, oh, ow});
  AlignedVector<T> cols(static_cast<std::size_t>(kk) * p);
  detail::CMapR<T> wm(weight.value().data(), cout, kk);
  for (int i = 0; i < sx.n; ++i) {
    detail::im2col(x.value().sample(i), sx.c, sx.h, sx.w, k, stride, pad, oh, ow, cols.data());
    detail::MapR<T> ym(out.sample(i), cout, p);
    ym.noalias() = wm * detail::CMapR<T>(cols.data(), kk, p);
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) ym.row(c).array() += bias.value()[c];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_result<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
    auto& xin = *self.inputs[0];
    auto& win = *self.inputs[1];
    Node<T>* bin = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    AlignedVector<T> col(static_cast<std::size_t>(kk) * p);
    detail::CMapR<T> wmat(win.value.data(), cout, kk);
    for (int i = 0; i < sx.n; ++i) {
      detail::CMapR<T> gy(self.grad.sample(i), cout, p);
      if (win.requires_grad) {
        detail::im2col(xin.value.sample(i), sx.c, sx.h, sx.w, k, stride, pad, oh, ow, col.data());
        detail::MapR<T> gw(win.ensure_grad().data(), cout, kk);
        gw.noalias() += gy * detail::CMapR<T>(col.data(), kk, p).transpose();
      }
      if (bin && bin->requires_grad) {
        auto& gb = bin->ensure_grad();
        for (int c = 0; c < cout; ++c) gb[c] += gy.row(c).sum();
      }
      if (xin.requires_grad) {
        detail::MapR<T>(col.data(), kk, p).noalias() = wmat.transpose() * gy;
        detail::col2im(col.data(), sx.c, sx.h, sx.w, k, stride, pad, oh, ow, xin.ensure_grad().sample(i));
      }
    }
  });
}

/// Transposed convolution; weight is [Cin, Cout, k, k]. Output size (in-1)*stride - 2*pad + k + output_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad, int output_pad) {
  const Shape sx = x.shape();
  const Shape sw = weight.shape();
  if (sx.c != sw.n) throw std::invalid_argument("conv_transpose2d: input " + sx.str() + " vs weight " + sw.str());
  const int k = sw.h;
  const int cout = sw.c;
  const int oh = (sx.h - 1) * stride - 2 * pad + k + output_pad;
  const int ow = (sx.w - 1) * stride - 2 * pad + k + output_pad;
  const int kk = cout * k * k;
  const int pin = sx.h * sx.w;

  Tensor<T> out(Shape{sx.n, cout, oh, ow});
  AlignedVector<T> cols(static_cast<std::size_t>(kk) * pin);
  detail::CMapR<T> wm(weight.value().data(), sx.c, kk);
  for (int i = 0; i < sx.n; ++i) {
    detail::MapR<T>(cols.data(), kk, pin).noalias() =
        wm.transpose() * detail::CMapR<T>(x.value().sample(i), sx.c, pin);
    detail::col2im(cols.data(), cout, oh, ow, k, stride, pad, sx.h, sx.w, out.sample(i));
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) {
        T* pl = out.plane(i, c);
        const T b = bias.value()[c];
        for (std::size_t j = 0; j < static_cast<std::size_t>(oh) * ow; ++j) pl[j] += b;
      }
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_result<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
    auto& xin = *self.inputs[0];
    auto& win = *self.inputs[1];
    Node<T>* bin = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    AlignedVector<T> col(static_cast<std::size_t>(kk) * pin);
    detail::CMapR<T> wmat(win.value.data(), sx.c, kk);
    for (int i = 0; i < sx.n; ++i) {
      detail::im2col(self.grad.sample(i), cout, oh, ow, k, stride, pad, sx.h, sx.w, col.data());
      detail::CMapR<T> gcol(col.data(), kk, pin);
      if (win.requires_grad) {
        detail::MapR<T> gw(win.ensure_grad().data(), sx.c, kk);
        gw.noalias() += detail::CMapR<T>(xin.value.sample(i), sx.c, pin) * gcol.transpose();
      }
      if (xin.requires_grad) {
        detail::MapR<T> gx(xin.ensure_grad().sample(i), sx.c, pin);
        gx.noalias() += wmat * gcol;
      }
      if (bin && bin->requires_grad) {
        auto& gb = bin->ensure_grad();
        for (int c = 0; c < cout; ++c) {
          const T* pl = self.grad.plane(i, c);
          T acc = 0;
          for (std::size_t j = 0; j < static_cast<std::size_t>(oh) * ow; ++j) acc += pl[j];
          gb[c] += acc;
        }
      }
    }
  });
}

/// Per-sample, per-channel normalization without affine terms. A 1x1 plane has no
/// spatial statistics and is passed through unchanged.
template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5)) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  if (plane <= 1) {
    return detail::unary<T>(x, [](T v) { return v; }, [](T, T) { return T(1); });
  }
  Tensor<T> out(s);
  std::vector<T> inv_std(static_cast<std::size_t>(s.n) * s.c);
  for (int i = 0; i < s.n; ++i) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(i, c);
      T* dst = out.plane(i, c);
      double m = 0;
      for (std::size_t j = 0; j < plane; ++j) m += src[j];
      m /= static_cast<double>(plane);
      double var = 0;
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = src[j] - m;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const T mt = static_cast<T>(m);
      inv_std[static_cast<std::size_t>(i) * s.c + c] = is;
      for (std::size_t j = 0; j < plane; ++j) dst[j] = (src[j] - mt) * is;
    }
  }
  return detail::make_result<T>(std::move(out), {x}, [inv_std = std::move(inv_std), plane](Node<T>& self) {
    auto& src = *self.inputs[0];
    if (!src.requires_grad) return;
    auto& g = src.ensure_grad();
    const Shape s = self.value.shape();
    const T inv_n = T(1) / static_cast<T>(plane);
    for (int i = 0; i < s.n; ++i) {
      for (int c = 0; c < s.c; ++c) {
        const T* gy = self.grad.plane(i, c);
        const T* xh = self.value.plane(i, c);
        T* gx = g.plane(i, c);
        T sum_g = 0;
        T sum_gx = 0;
        for (std::size_t j = 0; j < plane; ++j) {
          sum_g += gy[j];
          sum_gx += gy[j] * xh[j];
        }
        const T is = inv_std[static_cast<std::size_t>(i) * s.c + c];
        const T mg = sum_g * inv_n;
        const T mgx = sum_gx * inv_n;
        for (std::size_t j = 0; j < plane; ++j) gx[j] += is * (gy[j] - mg - xh[j] * mgx);
      }
    }
  });
}

}  // namespace undem

#endif  // UNDEM_AUTOGRAD_HPP
