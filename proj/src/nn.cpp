#include "frwkv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

FRWKV_BEGIN_NAMESPACE

namespace {

void require_rank4(const char* op, const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument(std::string(op) + ": expected N,C,H,W tensor, got " + x.shape().str());
}

}  // namespace

void Conv2dSpec::validate() const {
  if (in_ch < 1 || out_ch < 1) throw std::invalid_argument("Conv2dSpec: channel counts must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("Conv2dSpec: kernel must be odd");
  if (stride != 1 && stride != 2) throw std::invalid_argument("Conv2dSpec: stride must be 1 or 2");
  if (depthwise && in_ch != out_ch) throw std::invalid_argument("Conv2dSpec: depthwise requires in_ch == out_ch");
}

Shape Conv2dSpec::weight_shape() const {
  return Shape{out_ch, depthwise ? 1 : in_ch, kernel, kernel};
}

std::int64_t Conv2dSpec::parameter_count(bool with_bias) const {
  return weight_shape().numel() + (with_bias ? out_ch : 0);
}

Tensor conv2d(const Tensor& x, const Conv2dSpec& spec, const Tensor& weight, const Tensor& bias) {
  spec.validate();
  require_rank4("conv2d", x);
  const Shape& s = x.shape();
  if (s.c() != spec.in_ch) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(s.c()) + " channels, spec expects " +
                                std::to_string(spec.in_ch));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw std::invalid_argument("conv2d: weight " + weight.shape().str() + " != " + spec.weight_shape().str());
  }
  if (bias.defined() && bias.numel() != spec.out_ch) throw std::invalid_argument("conv2d: bias length mismatch");
  kernels::ConvGeometry g;
  g.batch = s.n();
  g.in_ch = spec.in_ch;
  g.out_ch = spec.out_ch;
  g.height = s.h();
  g.width = s.w();
  g.kernel = spec.kernel;
  g.stride = spec.stride;
  g.depthwise = spec.depthwise;
  g.padding = spec.padding;
  const Shape out_shape{s.n(), spec.out_ch, g.out_height(), g.out_width()};
  std::vector<Real> out(static_cast<std::size_t>(out_shape.numel()));
  kernels::conv2d_forward(g, x.data(), weight.data(), bias.defined() ? bias.data() : std::span<const Real>{}, out);
  Tensor result = Tensor::from_data(out_shape, std::move(out));
  if (autograd::should_record({&x, &weight, &bias})) {
    autograd::record("conv2d", result, {&x, &weight, &bias},
                     [g, xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr](
                         std::span<const Real> grad) {
                       kernels::conv2d_backward(g, xi->data, wi->data, grad,
                                                xi->requires_grad ? xi->grad_buffer() : std::span<Real>{},
                                                wi->requires_grad ? wi->grad_buffer() : std::span<Real>{},
                                                (bi && bi->requires_grad) ? bi->grad_buffer() : std::span<Real>{});
                     });
  }
  return result;
}

Tensor bilinear_sample(const Tensor& x, const Tensor& coords, int groups) {
  require_rank4("bilinear_sample", x);
  require_rank4("bilinear_sample", coords);
  const Shape& s = x.shape();
  if (groups < 1 || s.c() % groups != 0) {
    throw std::invalid_argument("bilinear_sample: " + std::to_string(s.c()) + " channels not divisible into " +
                                std::to_string(groups) + " groups");
  }
  if (coords.shape() != Shape{s.n(), 2 * groups, s.h(), s.w()}) {
    throw std::invalid_argument("bilinear_sample: coords " + coords.shape().str() + " do not match input " + s.str());
  }
  const kernels::SampleGeometry g{s.n(), s.c(), s.h(), s.w(), groups};
  std::vector<Real> out(static_cast<std::size_t>(s.numel()));
  kernels::bilinear_forward(g, x.data(), coords.data(), out);
  Tensor result = Tensor::from_data(s, std::move(out));
  if (autograd::should_record({&x, &coords})) {
    autograd::record("bilinear_sample", result, {&x, &coords},
                     [g, xi = x.impl(), ci = coords.impl()](std::span<const Real> grad) {
                       kernels::bilinear_backward(g, xi->data, ci->data, grad,
                                                  xi->requires_grad ? xi->grad_buffer() : std::span<Real>{},
                                                  ci->requires_grad ? ci->grad_buffer() : std::span<Real>{});
                     });
  }
  return result;
}

// ---- Activations ------------------------------------------------------------

namespace {

Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <typename F, typename D>
Tensor pointwise(const char* name, const Tensor& x, F f, D df) {
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  Tensor result = Tensor::from_data(x.shape(), std::move(out));
  if (autograd::should_record({&x})) {
    autograd::record(name, result, {&x}, [xi = x.impl(), df](std::span<const Real> g) {
      auto gx = xi->grad_buffer();
      const auto& xv = xi->data;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i]);
    });
  }
  return result;
}

}  // namespace

Tensor gelu(const Tensor& x) {
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  const Real inv_sqrt_2pi = Real(1) / std::sqrt(Real(2) * std::numbers::pi_v<Real>);
  return pointwise(
      "gelu", x, [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](Real v) {
        return Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2)) + v * std::exp(Real(-0.5) * v * v) * inv_sqrt_2pi;
      });
}

Tensor sigmoid(const Tensor& x) {
  return pointwise("sigmoid", x, sigmoid_scalar, [](Real v) {
    const Real s = sigmoid_scalar(v);
    return s * (Real(1) - s);
  });
}

Tensor squared_relu(const Tensor& x) {
  return pointwise(
      "squared_relu", x, [](Real v) { return v > 0 ? v * v : Real(0); },
      [](Real v) { return v > 0 ? Real(2) * v : Real(0); });
}

Tensor activation(Activation kind, const Tensor& x) {
  switch (kind) {
    case Activation::gelu:
      return gelu(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::squared_relu:
      return squared_relu(x);
  }
  throw std::invalid_argument("activation: unknown kind");
}

Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0) axis += s.rank();
  if (axis < 0 || axis >= s.rank()) throw std::invalid_argument("softmax: axis out of range for " + s.str());
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < s.rank(); ++i) inner *= s[i];
  const int len = s[axis];
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      Real mx = xd[static_cast<std::size_t>(base)];
      for (int a = 1; a < len; ++a) mx = std::max(mx, xd[static_cast<std::size_t>(base + a * inner)]);
      Real total = 0;
      for (int a = 0; a < len; ++a) {
        const std::size_t i = static_cast<std::size_t>(base + a * inner);
        out[i] = std::exp(xd[i] - mx);
        total += out[i];
      }
      for (int a = 0; a < len; ++a) out[static_cast<std::size_t>(base + a * inner)] /= total;
    }
  }
  Tensor result = Tensor::from_data(s, std::move(out));
  if (autograd::should_record({&x})) {
    autograd::record("softmax", result, {&x},
                     [xi = x.impl(), yi = result.impl(), outer, inner, len](std::span<const Real> g) {
                       auto gx = xi->grad_buffer();
                       const auto& y = yi->data;
                       for (std::int64_t o = 0; o < outer; ++o) {
                         for (std::int64_t in = 0; in < inner; ++in) {
                           const std::int64_t base = o * len * inner + in;
                           Real dotv = 0;
                           for (int a = 0; a < len; ++a) {
                             const std::size_t i = static_cast<std::size_t>(base + a * inner);
                             dotv += g[i] * y[i];
                           }
                           for (int a = 0; a < len; ++a) {
                             const std::size_t i = static_cast<std::size_t>(base + a * inner);
                             gx[i] += y[i] * (g[i] - dotv);
                           }
                         }
                       }
                     });
  }
  return result;
}

// ---- Normalization and pooling ----------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  require_rank4("layer_norm", x);
  const Shape& s = x.shape();
  if (gain.numel() != s.c() || bias.numel() != s.c()) {
    throw std::invalid_argument("layer_norm: affine parameters must have " + std::to_string(s.c()) + " entries");
  }
  const int spatial = s.h() * s.w();
  std::vector<Real> out(static_cast<std::size_t>(s.numel()));
  auto mean = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(s.n()) * spatial);
  auto rstd = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(s.n()) * spatial);
  kernels::layer_norm_forward(s.n(), s.c(), spatial, eps, x.data(), gain.data(), bias.data(), out, *mean, *rstd);
  Tensor result = Tensor::from_data(s, std::move(out));
  if (autograd::should_record({&x, &gain, &bias})) {
    autograd::record("layer_norm", result, {&x, &gain, &bias},
                     [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), mean, rstd, n = s.n(), c = s.c(),
                      spatial](std::span<const Real> g) {
                       kernels::layer_norm_backward(n, c, spatial, xi->data, gi->data, *mean, *rstd, g,
                                                    xi->requires_grad ? xi->grad_buffer() : std::span<Real>{},
                                                    gi->requires_grad ? gi->grad_buffer() : std::span<Real>{},
                                                    bi->requires_grad ? bi->grad_buffer() : std::span<Real>{});
                     });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank4("global_avg_pool", x);
  const Shape& s = x.shape();
  const std::int64_t plane = static_cast<std::int64_t>(s.h()) * s.w();
  const std::int64_t planes = static_cast<std::int64_t>(s.n()) * s.c();
  std::vector<Real> out(static_cast<std::size_t>(planes));
  for (std::int64_t p = 0; p < planes; ++p) {
    Real acc = 0;
    const Real* xp = x.ptr() + p * plane;
    for (std::int64_t i = 0; i < plane; ++i) acc += xp[i];
    out[static_cast<std::size_t>(p)] = acc / static_cast<Real>(plane);
  }
  Tensor result = Tensor::from_data(Shape{s.n(), s.c(), 1, 1}, std::move(out));
  if (autograd::should_record({&x})) {
    autograd::record("global_avg_pool", result, {&x}, [xi = x.impl(), plane, planes](std::span<const Real> g) {
      auto gx = xi->grad_buffer();
      for (std::int64_t p = 0; p < planes; ++p) {
        const Real v = g[static_cast<std::size_t>(p)] / static_cast<Real>(plane);
        Real* dst = gx.data() + p * plane;
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += v;
      }
    });
  }
  return result;
}

// ---- Pixel shuffle ----------------------------------------------------------

namespace {

// Index map: output of pixel_shuffle at (n, c, y, x) reads input channel
// 4c + 2(y%2) + (x%2) at (y/2, x/2).
std::vector<std::int64_t> shuffle_map(int n, int c_out, int h_in, int w_in) {
  const int h_out = 2 * h_in;
  const int w_out = 2 * w_in;
  std::vector<std::int64_t> map(static_cast<std::size_t>(n) * c_out * h_out * w_out);
  std::size_t o = 0;
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < c_out; ++c) {
      for (int y = 0; y < h_out; ++y) {
        for (int x = 0; x < w_out; ++x) {
          const int ci = 4 * c + 2 * (y % 2) + (x % 2);
          map[o++] = ((static_cast<std::int64_t>(b) * 4 * c_out + ci) * h_in + y / 2) * w_in + x / 2;
        }
      }
    }
  }
  return map;
}

// out[i] = x[map[i]] with the matching scatter backward.
Tensor permute(const char* name, const Tensor& x, const Shape& out_shape, std::vector<std::int64_t> map,
               bool gather) {
  std::vector<Real> out(static_cast<std::size_t>(out_shape.numel()));
  const auto xd = x.data();
  if (gather) {
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = xd[static_cast<std::size_t>(map[i])];
  } else {
    for (std::size_t i = 0; i < map.size(); ++i) out[static_cast<std::size_t>(map[i])] = xd[i];
  }
  Tensor result = Tensor::from_data(out_shape, std::move(out));
  if (autograd::should_record({&x})) {
    autograd::record(name, result, {&x}, [xi = x.impl(), map = std::move(map), gather](std::span<const Real> g) {
      auto gx = xi->grad_buffer();
      if (gather) {
        for (std::size_t i = 0; i < map.size(); ++i) gx[static_cast<std::size_t>(map[i])] += g[i];
      } else {
        for (std::size_t i = 0; i < map.size(); ++i) gx[i] += g[static_cast<std::size_t>(map[i])];
      }
    });
  }
  return result;
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x) {
  require_rank4("pixel_shuffle", x);
  const Shape& s = x.shape();
  if (s.c() % 4 != 0) throw std::invalid_argument("pixel_shuffle: channel count " + std::to_string(s.c()) + " not divisible by 4");
  const int c_out = s.c() / 4;
  return permute("pixel_shuffle", x, Shape{s.n(), c_out, 2 * s.h(), 2 * s.w()}, shuffle_map(s.n(), c_out, s.h(), s.w()),
                 true);
}

Tensor pixel_unshuffle(const Tensor& x) {
  require_rank4("pixel_unshuffle", x);
  const Shape& s = x.shape();
  if (s.h() % 2 != 0 || s.w() % 2 != 0) throw std::invalid_argument("pixel_unshuffle: spatial extents must be even");
  return permute("pixel_unshuffle", x, Shape{s.n(), 4 * s.c(), s.h() / 2, s.w() / 2},
                 shuffle_map(s.n(), s.c(), s.h() / 2, s.w() / 2), false);
}

// ---- Dynamic depthwise ------------------------------------------------------

Tensor dynamic_depthwise_conv(const Tensor& x, const Tensor& kern, int k, Padding padding) {
  require_rank4("dynamic_depthwise_conv", x);
  const Shape& s = x.shape();
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("dynamic_depthwise_conv: kernel size must be odd");
  if (kern.numel() != static_cast<std::int64_t>(s.n()) * s.c() * k * k) {
    throw std::invalid_argument("dynamic_depthwise_conv: kernels " + kern.shape().str() + " do not match input " + s.str());
  }
  std::vector<Real> out(static_cast<std::size_t>(s.numel()));
  kernels::dynamic_depthwise_forward(s.n(), s.c(), s.h(), s.w(), k, padding, x.data(), kern.data(), out);
  Tensor result = Tensor::from_data(s, std::move(out));
  if (autograd::should_record({&x, &kern})) {
    autograd::record("dynamic_depthwise_conv", result, {&x, &kern},
                     [xi = x.impl(), ki = kern.impl(), s, k, padding](std::span<const Real> g) {
                       kernels::dynamic_depthwise_backward(
                           s.n(), s.c(), s.h(), s.w(), k, padding, xi->data, ki->data, g,
                           xi->requires_grad ? xi->grad_buffer() : std::span<Real>{},
                           ki->requires_grad ? ki->grad_buffer() : std::span<Real>{});
                     });
  }
  return result;
}

FRWKV_END_NAMESPACE
