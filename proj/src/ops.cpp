#include "frwkv/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "frwkv/kernels.hpp"

FRWKV_BEGIN_NAMESPACE

namespace {

enum class Broadcast { none, shared, per_sample };

struct BinaryLayout {
  Broadcast mode = Broadcast::none;
  std::int64_t batch = 1;
  std::int64_t channels = 1;
  std::int64_t spatial = 1;

  std::int64_t b_index(std::int64_t n, std::int64_t c) const {
    return mode == Broadcast::shared ? c : n * channels + c;
  }
};

BinaryLayout layout_for(const char* op, const Tensor& a, const Tensor& b) {
  BinaryLayout l;
  if (a.shape() == b.shape()) return l;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() == 4) {
    l.batch = sa.n();
    l.channels = sa.c();
    l.spatial = static_cast<std::int64_t>(sa.h()) * sa.w();
    const bool shared = (sb.rank() == 1 && sb[0] == sa.c()) ||
                        (sb.rank() == 4 && sb.n() == 1 && sb.c() == sa.c() && sb.h() == 1 && sb.w() == 1) ||
                        (sb.rank() == 3 && sb[0] == sa.c() && sb[1] == 1 && sb[2] == 1);
    const bool per_sample = sb.rank() == 4 && sb.n() == sa.n() && sb.c() == sa.c() && sb.h() == 1 && sb.w() == 1;
    if (shared) {
      l.mode = Broadcast::shared;
      return l;
    }
    if (per_sample) {
      l.mode = Broadcast::per_sample;
      return l;
    }
  }
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + sa.str() + " vs " + sb.str());
}

template <typename Fwd>
std::vector<Real> binary_forward(const BinaryLayout& l, const Tensor& a, const Tensor& b, Fwd f) {
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<Real> out(ad.size());
  if (l.mode == Broadcast::none) {
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i], bd[i]);
    return out;
  }
  for (std::int64_t n = 0; n < l.batch; ++n) {
    for (std::int64_t c = 0; c < l.channels; ++c) {
      const Real bv = bd[static_cast<std::size_t>(l.b_index(n, c))];
      const std::size_t base = static_cast<std::size_t>((n * l.channels + c) * l.spatial);
      for (std::int64_t p = 0; p < l.spatial; ++p) {
        out[base + static_cast<std::size_t>(p)] = f(ad[base + static_cast<std::size_t>(p)], bv);
      }
    }
  }
  return out;
}

// Accumulates da += g * dfa(a, b) and db += reduce(g * dfb(a, b)).
template <typename DA, typename DB>
void binary_backward(const BinaryLayout& l, TensorImpl& a, TensorImpl& b, std::span<const Real> g, DA dfa,
                     DB dfb) {
  const auto& ad = a.data;
  const auto& bd = b.data;
  if (l.mode == Broadcast::none) {
    if (a.requires_grad) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfa(ad[i], bd[i]);
    }
    if (b.requires_grad) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * dfb(ad[i], bd[i]);
    }
    return;
  }
  std::span<Real> ga = a.requires_grad ? a.grad_buffer() : std::span<Real>{};
  std::span<Real> gb = b.requires_grad ? b.grad_buffer() : std::span<Real>{};
  for (std::int64_t n = 0; n < l.batch; ++n) {
    for (std::int64_t c = 0; c < l.channels; ++c) {
      const std::size_t bi = static_cast<std::size_t>(l.b_index(n, c));
      const Real bv = bd[bi];
      const std::size_t base = static_cast<std::size_t>((n * l.channels + c) * l.spatial);
      Real acc = 0;
      for (std::int64_t p = 0; p < l.spatial; ++p) {
        const std::size_t i = base + static_cast<std::size_t>(p);
        if (!ga.empty()) ga[i] += g[i] * dfa(ad[i], bv);
        if (!gb.empty()) acc += g[i] * dfb(ad[i], bv);
      }
      if (!gb.empty()) gb[bi] += acc;
    }
  }
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd f, DA dfa, DB dfb) {
  const BinaryLayout l = layout_for(name, a, b);
  Tensor out = Tensor::from_data(a.shape(), binary_forward(l, a, b, f));
  if (autograd::should_record({&a, &b})) {
    autograd::record(name, out, {&a, &b}, [l, ai = a.impl(), bi = b.impl(), dfa, dfb](std::span<const Real> g) {
      binary_backward(l, *ai, *bi, g, dfa, dfb);
    });
  }
  return out;
}

template <typename Fwd, typename D>
Tensor unary_op(const char* name, const Tensor& a, Fwd f, D df) {
  const auto ad = a.data();
  std::vector<Real> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i]);
  Tensor result = Tensor::from_data(a.shape(), std::move(out));
  if (autograd::should_record({&a})) {
    autograd::record(name, result, {&a}, [ai = a.impl(), df](std::span<const Real> g) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(ai->data[i]);
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (Real v : b.data()) {
    if (v == Real(0)) throw std::invalid_argument("div: division by exact zero");
  }
  return binary_op(
      "div", a, b, [](Real x, Real y) { return x / y; }, [](Real, Real y) { return Real(1) / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, Real s) {
  return unary_op(
      "add_scalar", a, [s](Real x) { return x + s; }, [](Real) { return Real(1); });
}

Tensor scale(const Tensor& a, Real s) {
  return unary_op(
      "scale", a, [s](Real x) { return x * s; }, [s](Real) { return s; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](Real x) { return std::abs(x); },
      [](Real x) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); });
}

// ---------------------------------------------------------------------------

namespace {

// c[m, n] += sum_k a[m, k] b[k, n]
void gemm_nn(int m, int k, int n, const Real* a, const Real* b, Real* c) {
  for (int i = 0; i < m; ++i) {
    Real* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const Real av = a[static_cast<std::ptrdiff_t>(i) * k + kk];
      const Real* brow = b + static_cast<std::ptrdiff_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  kernels::count_macs(static_cast<std::int64_t>(m) * k * n);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  int batch = 1, m, k, n;
  if (sa.rank() == 2 && sb.rank() == 2) {
    m = sa[0];
    k = sa[1];
    n = sb[1];
    if (sb[0] != k) throw std::invalid_argument("matmul: inner extents differ " + sa.str() + " x " + sb.str());
  } else if (sa.rank() == 3 && sb.rank() == 3) {
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[2];
    if (sb[0] != batch || sb[1] != k) {
      throw std::invalid_argument("matmul: incompatible batched shapes " + sa.str() + " x " + sb.str());
    }
  } else {
    throw std::invalid_argument("matmul: expected rank-2 or rank-3 operands, got " + sa.str() + " x " + sb.str());
  }
  const std::int64_t a_step = static_cast<std::int64_t>(m) * k;
  const std::int64_t b_step = static_cast<std::int64_t>(k) * n;
  const std::int64_t c_step = static_cast<std::int64_t>(m) * n;
  std::vector<Real> out(static_cast<std::size_t>(batch * c_step), Real(0));
  for (int bi = 0; bi < batch; ++bi) gemm_nn(m, k, n, a.ptr() + bi * a_step, b.ptr() + bi * b_step, out.data() + bi * c_step);
  Shape shape = sa.rank() == 2 ? Shape{m, n} : Shape{batch, m, n};
  Tensor result = Tensor::from_data(shape, std::move(out));
  if (autograd::should_record({&a, &b})) {
    autograd::record("matmul", result, {&a, &b},
                     [ai = a.impl(), bimpl = b.impl(), batch, m, k, n, a_step, b_step, c_step](std::span<const Real> g) {
                       for (int bi = 0; bi < batch; ++bi) {
                         const Real* gp = g.data() + bi * c_step;
                         if (ai->requires_grad) {
                           // dA = dO . B^T
                           Real* ga = ai->grad_buffer().data() + bi * a_step;
                           const Real* bp = bimpl->data.data() + bi * b_step;
                           for (int i = 0; i < m; ++i) {
                             for (int kk = 0; kk < k; ++kk) {
                               Real s = 0;
                               for (int j = 0; j < n; ++j) s += gp[i * n + j] * bp[kk * n + j];
                               ga[i * k + kk] += s;
                             }
                           }
                         }
                         if (bimpl->requires_grad) {
                           // dB = A^T . dO
                           Real* gb = bimpl->grad_buffer().data() + bi * b_step;
                           const Real* ap = ai->data.data() + bi * a_step;
                           for (int i = 0; i < m; ++i) {
                             for (int kk = 0; kk < k; ++kk) {
                               const Real av = ap[i * k + kk];
                               for (int j = 0; j < n; ++j) gb[kk * n + j] += av * gp[i * n + j];
                             }
                           }
                         }
                       }
                     });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  const int in = sx[sx.rank() - 1];
  if (sw.rank() != 2 || sw[1] != in) {
    throw std::invalid_argument("linear: weight " + sw.str() + " does not accept input " + sx.str());
  }
  const int outf = sw[0];
  if (bias.defined() && bias.numel() != outf) throw std::invalid_argument("linear: bias length mismatch");
  const std::int64_t rows = x.numel() / in;
  std::vector<int> dims(sx.dims().begin(), sx.dims().end());
  dims.back() = outf;
  std::vector<Real> out(static_cast<std::size_t>(rows * outf));
  const Real* xp = x.ptr();
  const Real* wp = weight.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int o = 0; o < outf; ++o) {
      Real s = bias.defined() ? bias.data()[static_cast<std::size_t>(o)] : Real(0);
      for (int i = 0; i < in; ++i) s += xp[r * in + i] * wp[static_cast<std::int64_t>(o) * in + i];
      out[static_cast<std::size_t>(r * outf + o)] = s;
    }
  }
  kernels::count_macs(rows * outf * in);
  Tensor result = Tensor::from_data(Shape(std::span<const int>(dims)), std::move(out));
  if (autograd::should_record({&x, &weight, &bias})) {
    autograd::record("linear", result, {&x, &weight, &bias},
                     [xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr, rows, in,
                      outf](std::span<const Real> g) {
                       const Real* xp = xi->data.data();
                       const Real* wp = wi->data.data();
                       if (xi->requires_grad) {
                         auto gx = xi->grad_buffer();
                         for (std::int64_t r = 0; r < rows; ++r) {
                           for (int o = 0; o < outf; ++o) {
                             const Real gv = g[static_cast<std::size_t>(r * outf + o)];
                             for (int i = 0; i < in; ++i) gx[static_cast<std::size_t>(r * in + i)] += gv * wp[o * in + i];
                           }
                         }
                       }
                       if (wi->requires_grad) {
                         auto gw = wi->grad_buffer();
                         for (std::int64_t r = 0; r < rows; ++r) {
                           for (int o = 0; o < outf; ++o) {
                             const Real gv = g[static_cast<std::size_t>(r * outf + o)];
                             for (int i = 0; i < in; ++i) gw[static_cast<std::size_t>(o * in + i)] += gv * xp[r * in + i];
                           }
                         }
                       }
                       if (bi && bi->requires_grad) {
                         auto gb = bi->grad_buffer();
                         for (std::int64_t r = 0; r < rows; ++r) {
                           for (int o = 0; o < outf; ++o) gb[static_cast<std::size_t>(o)] += g[static_cast<std::size_t>(r * outf + o)];
                         }
                       }
                     });
  }
  return result;
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0;
  for (Real v : a.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<Real>(acc));
  if (autograd::should_record({&a})) {
    autograd::record("sum", out, {&a}, [ai = a.impl()](std::span<const Real> g) {
      for (Real& v : ai->grad_buffer()) v += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<double>(a.numel());
  double acc = 0;
  for (Real v : a.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<Real>(acc / n));
  if (autograd::should_record({&a})) {
    autograd::record("mean", out, {&a}, [ai = a.impl(), n](std::span<const Real> g) {
      const Real s = g[0] / static_cast<Real>(n);
      for (Real& v : ai->grad_buffer()) v += s;
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape.numel() != a.numel()) {
    throw std::invalid_argument("reshape: " + a.shape().str() + " -> " + shape.str() + " changes element count");
  }
  Tensor out = Tensor::from_data(shape, std::vector<Real>(a.data().begin(), a.data().end()));
  if (autograd::should_record({&a})) {
    autograd::record("reshape", out, {&a}, [ai = a.impl()](std::span<const Real> g) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

namespace {

struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t inner = 1;
};

AxisSplit split_axis1(const Shape& s) {
  if (s.rank() < 2) throw std::invalid_argument("channel op: rank >= 2 required, got " + s.str());
  AxisSplit r;
  r.outer = s[0];
  for (int i = 2; i < s.rank(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  const AxisSplit ax = split_axis1(s0);
  int total = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.rank() == s0.rank() && s[0] == s0[0];
    for (int i = 2; ok && i < s.rank(); ++i) ok = s[i] == s0[i];
    if (!ok) throw std::invalid_argument("concat_channels: " + s.str() + " incompatible with " + s0.str());
    total += s[1];
  }
  std::vector<int> dims(s0.dims().begin(), s0.dims().end());
  dims[1] = total;
  std::vector<Real> out(static_cast<std::size_t>(ax.outer * total * ax.inner));
  std::vector<int> offsets;
  int off = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(off);
    const int c = t.shape()[1];
    for (std::int64_t o = 0; o < ax.outer; ++o) {
      std::copy_n(t.ptr() + o * c * ax.inner, c * ax.inner, out.data() + (o * total + off) * ax.inner);
    }
    off += c;
  }
  Tensor result = Tensor::from_data(Shape(std::span<const int>(dims)), std::move(out));
  if (autograd::should_record(parts)) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& t : parts) impls.push_back(t.impl());
    autograd::record("concat_channels", result, parts,
                     [impls, offsets, ax, total](std::span<const Real> g) {
                       for (std::size_t p = 0; p < impls.size(); ++p) {
                         TensorImpl& t = *impls[p];
                         if (!t.requires_grad) continue;
                         const int c = t.shape[1];
                         auto gt = t.grad_buffer();
                         for (std::int64_t o = 0; o < ax.outer; ++o) {
                           const Real* src = g.data() + (o * total + offsets[p]) * ax.inner;
                           Real* dst = gt.data() + o * c * ax.inner;
                           for (std::int64_t i = 0; i < c * ax.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
  }
  return result;
}

Tensor slice_channels(const Tensor& a, int begin, int count) {
  const Shape& s = a.shape();
  const AxisSplit ax = split_axis1(s);
  const int total = s[1];
  if (begin < 0 || count < 1 || begin + count > total) {
    throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") outside " + s.str());
  }
  std::vector<int> dims(s.dims().begin(), s.dims().end());
  dims[1] = count;
  std::vector<Real> out(static_cast<std::size_t>(ax.outer * count * ax.inner));
  for (std::int64_t o = 0; o < ax.outer; ++o) {
    std::copy_n(a.ptr() + (o * total + begin) * ax.inner, count * ax.inner, out.data() + o * count * ax.inner);
  }
  Tensor result = Tensor::from_data(Shape(std::span<const int>(dims)), std::move(out));
  if (autograd::should_record({&a})) {
    autograd::record("slice_channels", result, {&a}, [ai = a.impl(), ax, total, begin, count](std::span<const Real> g) {
      auto ga = ai->grad_buffer();
      for (std::int64_t o = 0; o < ax.outer; ++o) {
        const Real* src = g.data() + o * count * ax.inner;
        Real* dst = ga.data() + (o * total + begin) * ax.inner;
        for (std::int64_t i = 0; i < count * ax.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return result;
}

Tensor mul_planes(const Tensor& a, const Tensor& w) {
  const Shape& sa = a.shape();
  const Shape& sw = w.shape();
  if (sa.rank() != 4 || sw.rank() != 4 || sw.n() != sa.n() || sw.c() != 1 || sw.h() != sa.h() || sw.w() != sa.w()) {
    throw std::invalid_argument("mul_planes: shape mismatch " + sa.str() + " vs " + sw.str());
  }
  const std::int64_t plane = static_cast<std::int64_t>(sa.h()) * sa.w();
  const int n_ch = sa.c();
  std::vector<Real> out(static_cast<std::size_t>(a.numel()));
  for (int n = 0; n < sa.n(); ++n) {
    const Real* wp = w.ptr() + n * plane;
    for (int c = 0; c < n_ch; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * n_ch + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) out[static_cast<std::size_t>(base + p)] = a.ptr()[base + p] * wp[p];
    }
  }
  Tensor result = Tensor::from_data(sa, std::move(out));
  if (autograd::should_record({&a, &w})) {
    autograd::record("mul_planes", result, {&a, &w},
                     [ai = a.impl(), wi = w.impl(), sa, plane, n_ch](std::span<const Real> g) {
                       std::span<Real> ga = ai->requires_grad ? ai->grad_buffer() : std::span<Real>{};
                       std::span<Real> gw = wi->requires_grad ? wi->grad_buffer() : std::span<Real>{};
                       for (int n = 0; n < sa.n(); ++n) {
                         for (int c = 0; c < n_ch; ++c) {
                           const std::int64_t base = (static_cast<std::int64_t>(n) * n_ch + c) * plane;
                           for (std::int64_t p = 0; p < plane; ++p) {
                             const std::size_t i = static_cast<std::size_t>(base + p);
                             const std::size_t j = static_cast<std::size_t>(n * plane + p);
                             if (!ga.empty()) ga[i] += g[i] * wi->data[j];
                             if (!gw.empty()) gw[j] += g[i] * ai->data[i];
                           }
                         }
                       }
                     });
  }
  return result;
}

FRWKV_END_NAMESPACE
