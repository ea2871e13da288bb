#include "frwkv/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "kernels_internal.hpp"

FRWKV_BEGIN_NAMESPACE
namespace kernels {

// ---- Instrumentation --------------------------------------------------------

namespace {
std::atomic<std::int64_t> g_macs{0};
std::atomic<int> g_counting{0};
}  // namespace

MacCounter::MacCounter() {
  g_macs.store(0);
  g_counting.fetch_add(1);
}
MacCounter::~MacCounter() { g_counting.fetch_sub(1); }
std::int64_t MacCounter::total() const { return g_macs.load(); }

void count_macs(std::int64_t n) {
  if (g_counting.load(std::memory_order_relaxed) > 0) g_macs.fetch_add(n, std::memory_order_relaxed);
}

std::int64_t ConvGeometry::macs() const {
  const std::int64_t per_out = static_cast<std::int64_t>(depthwise ? 1 : in_ch) * kernel * kernel;
  return static_cast<std::int64_t>(batch) * out_ch * out_height() * out_width() * per_out;
}

// ---- Convolution ------------------------------------------------------------

namespace detail {

PlaneWindow::PlaneWindow(int in_w, int out_w, int stride, int offset) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int hi = (in_w - 1 - offset) >= 0 ? (in_w - 1 - offset) / stride : -1;
  left_end = std::min(lo, out_w);
  interior_end = std::max(left_end, std::min(hi + 1, out_w));
}

namespace {

constexpr int kMaxKernel = 15;

struct RowWindows {
  PlaneWindow win[kMaxKernel];

  RowWindows(int w, int ow_count, int k, int stride) : win{} {
    if (k > kMaxKernel) throw std::invalid_argument("conv2d kernel: kernel size above 15 unsupported");
    for (int kw = 0; kw < k; ++kw) win[kw] = PlaneWindow(w, ow_count, stride, kw - k / 2);
  }
};

}  // namespace

void accumulate_plane(Real* out, const Real* in, int h, int w, int oh_count, int ow_count, int k, int stride,
                      Padding padding, const Real* kernel) {
  const int pad = k / 2;
  const RowWindows windows(w, ow_count, k, stride);
  for (int kh = 0; kh < k; ++kh) {
    for (int oh = 0; oh < oh_count; ++oh) {
      int ih = oh * stride + kh - pad;
      if (ih < 0 || ih >= h) {
        if (padding == Padding::zero) continue;
        ih = std::clamp(ih, 0, h - 1);
      }
      const Real* irow = in + static_cast<std::ptrdiff_t>(ih) * w;
      Real* orow = out + static_cast<std::ptrdiff_t>(oh) * ow_count;
      for (int kw = 0; kw < k; ++kw) {
        const Real wv = kernel[kh * k + kw];
        const int off = kw - pad;
        const PlaneWindow& win = windows.win[kw];
        if (padding == Padding::replicate) {
          for (int ow = 0; ow < win.left_end; ++ow) orow[ow] += wv * irow[0];
        }
        if (stride == 1) {
          const Real* src = irow + off;
          for (int ow = win.left_end; ow < win.interior_end; ++ow) orow[ow] += wv * src[ow];
        } else {
          for (int ow = win.left_end; ow < win.interior_end; ++ow) orow[ow] += wv * irow[ow * stride + off];
        }
        if (padding == Padding::replicate) {
          for (int ow = win.interior_end; ow < ow_count; ++ow) orow[ow] += wv * irow[w - 1];
        }
      }
    }
  }
}

void scatter_plane(Real* dx, const Real* grad, int h, int w, int oh_count, int ow_count, int k, int stride,
                   Padding padding, const Real* kernel) {
  const int pad = k / 2;
  const RowWindows windows(w, ow_count, k, stride);
  for (int kh = 0; kh < k; ++kh) {
    for (int oh = 0; oh < oh_count; ++oh) {
      int ih = oh * stride + kh - pad;
      if (ih < 0 || ih >= h) {
        if (padding == Padding::zero) continue;
        ih = std::clamp(ih, 0, h - 1);
      }
      Real* drow = dx + static_cast<std::ptrdiff_t>(ih) * w;
      const Real* grow = grad + static_cast<std::ptrdiff_t>(oh) * ow_count;
      for (int kw = 0; kw < k; ++kw) {
        const Real wv = kernel[kh * k + kw];
        const int off = kw - pad;
        const PlaneWindow& win = windows.win[kw];
        if (padding == Padding::replicate) {
          Real s = 0;
          for (int ow = 0; ow < win.left_end; ++ow) s += grow[ow];
          drow[0] += wv * s;
        }
        if (stride == 1) {
          Real* dst = drow + off;
          for (int ow = win.left_end; ow < win.interior_end; ++ow) dst[ow] += wv * grow[ow];
        } else {
          for (int ow = win.left_end; ow < win.interior_end; ++ow) drow[ow * stride + off] += wv * grow[ow];
        }
        if (padding == Padding::replicate) {
          Real s = 0;
          for (int ow = win.interior_end; ow < ow_count; ++ow) s += grow[ow];
          drow[w - 1] += wv * s;
        }
      }
    }
  }
}

void correlate_plane(Real* dkernel, const Real* grad, const Real* in, int h, int w, int oh_count, int ow_count,
                     int k, int stride, Padding padding) {
  const int pad = k / 2;
  const RowWindows windows(w, ow_count, k, stride);
  for (int kh = 0; kh < k; ++kh) {
    for (int oh = 0; oh < oh_count; ++oh) {
      int ih = oh * stride + kh - pad;
      if (ih < 0 || ih >= h) {
        if (padding == Padding::zero) continue;
        ih = std::clamp(ih, 0, h - 1);
      }
      const Real* irow = in + static_cast<std::ptrdiff_t>(ih) * w;
      const Real* grow = grad + static_cast<std::ptrdiff_t>(oh) * ow_count;
      for (int kw = 0; kw < k; ++kw) {
        const int off = kw - pad;
        const PlaneWindow& win = windows.win[kw];
        Real s = 0;
        if (padding == Padding::replicate) {
          for (int ow = 0; ow < win.left_end; ++ow) s += grow[ow] * irow[0];
        }
        for (int ow = win.left_end; ow < win.interior_end; ++ow) s += grow[ow] * irow[ow * stride + off];
        if (padding == Padding::replicate) {
          for (int ow = win.interior_end; ow < ow_count; ++ow) s += grow[ow] * irow[w - 1];
        }
        dkernel[kh * k + kw] += s;
      }
    }
  }
}

Real dot(const Real* a, const Real* b, std::int64_t n) {
  // Four fixed lanes keep the summation order independent of the compiler.
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

Real sum(const Real* a, std::int64_t n) {
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  for (; i < n; ++i) s0 += a[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

namespace {

void check_conv_sizes(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight) {
  const std::int64_t cin_per = g.depthwise ? 1 : g.in_ch;
  if (static_cast<std::int64_t>(x.size()) != static_cast<std::int64_t>(g.batch) * g.in_ch * g.height * g.width ||
      static_cast<std::int64_t>(weight.size()) != g.out_ch * cin_per * g.kernel * g.kernel) {
    throw std::invalid_argument("conv2d kernel: buffer sizes do not match geometry");
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> out) {
  check_conv_sizes(g, x, weight);
  count_macs(g.macs());
  const int oh = g.out_height();
  const int ow = g.out_width();
  const std::int64_t in_plane = static_cast<std::int64_t>(g.height) * g.width;
  const std::int64_t out_plane = static_cast<std::int64_t>(oh) * ow;
  const int cin_per = g.depthwise ? 1 : g.in_ch;
  const std::int64_t planes = static_cast<std::int64_t>(g.batch) * g.out_ch;

  if (g.kernel == 1 && g.stride == 1 && !g.depthwise) {
#pragma omp parallel for schedule(static)
    for (std::int64_t idx = 0; idx < planes; ++idx) {
      const std::int64_t n = idx / g.out_ch;
      const int o = static_cast<int>(idx % g.out_ch);
      Real* op = out.data() + idx * out_plane;
      std::fill(op, op + out_plane, bias.empty() ? Real(0) : bias[static_cast<std::size_t>(o)]);
      const Real* wrow = weight.data() + static_cast<std::int64_t>(o) * g.in_ch;
      for (int i = 0; i < g.in_ch; ++i) {
        const Real wv = wrow[i];
        const Real* ip = x.data() + (n * g.in_ch + i) * in_plane;
        for (std::int64_t p = 0; p < out_plane; ++p) op[p] += wv * ip[p];
      }
    }
    return;
  }

#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const std::int64_t n = idx / g.out_ch;
    const int o = static_cast<int>(idx % g.out_ch);
    Real* op = out.data() + idx * out_plane;
    std::fill(op, op + out_plane, bias.empty() ? Real(0) : bias[static_cast<std::size_t>(o)]);
    for (int ci = 0; ci < cin_per; ++ci) {
      const int i = g.depthwise ? o : ci;
      const Real* ip = x.data() + (n * g.in_ch + i) * in_plane;
      const Real* wk = weight.data() + (static_cast<std::int64_t>(o) * cin_per + ci) * g.kernel * g.kernel;
      detail::accumulate_plane(op, ip, g.height, g.width, oh, ow, g.kernel, g.stride, g.padding, wk);
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                     std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dweight,
                     std::span<Real> dbias) {
  check_conv_sizes(g, x, weight);
  count_macs(2 * g.macs());
  const int oh = g.out_height();
  const int ow = g.out_width();
  const std::int64_t in_plane = static_cast<std::int64_t>(g.height) * g.width;
  const std::int64_t out_plane = static_cast<std::int64_t>(oh) * ow;
  const int cin_per = g.depthwise ? 1 : g.in_ch;
  const int kk = g.kernel * g.kernel;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && !g.depthwise;

  if (!dx.empty()) {
    const std::int64_t planes = static_cast<std::int64_t>(g.batch) * g.in_ch;
#pragma omp parallel for schedule(static)
    for (std::int64_t idx = 0; idx < planes; ++idx) {
      const std::int64_t n = idx / g.in_ch;
      const int i = static_cast<int>(idx % g.in_ch);
      Real* dp = dx.data() + idx * in_plane;
      if (pointwise) {
        for (int o = 0; o < g.out_ch; ++o) {
          const Real wv = weight[static_cast<std::size_t>(o) * g.in_ch + i];
          const Real* gp = grad_out.data() + (n * g.out_ch + o) * out_plane;
          for (std::int64_t p = 0; p < in_plane; ++p) dp[p] += wv * gp[p];
        }
      } else if (g.depthwise) {
        const Real* gp = grad_out.data() + (n * g.out_ch + i) * out_plane;
        detail::scatter_plane(dp, gp, g.height, g.width, oh, ow, g.kernel, g.stride, g.padding,
                              weight.data() + static_cast<std::int64_t>(i) * kk);
      } else {
        for (int o = 0; o < g.out_ch; ++o) {
          const Real* gp = grad_out.data() + (n * g.out_ch + o) * out_plane;
          detail::scatter_plane(dp, gp, g.height, g.width, oh, ow, g.kernel, g.stride, g.padding,
                                weight.data() + (static_cast<std::int64_t>(o) * cin_per + i) * kk);
        }
      }
    }
  }

  if (!dweight.empty() || !dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < g.out_ch; ++o) {
      for (int n = 0; n < g.batch; ++n) {
        const Real* gp = grad_out.data() + (static_cast<std::int64_t>(n) * g.out_ch + o) * out_plane;
        if (!dbias.empty()) dbias[static_cast<std::size_t>(o)] += detail::sum(gp, out_plane);
        if (dweight.empty()) continue;
        for (int ci = 0; ci < cin_per; ++ci) {
          const int i = g.depthwise ? o : ci;
          const Real* ip = x.data() + (static_cast<std::int64_t>(n) * g.in_ch + i) * in_plane;
          Real* dk = dweight.data() + (static_cast<std::int64_t>(o) * cin_per + ci) * kk;
          if (pointwise) {
            dk[0] += detail::dot(gp, ip, out_plane);
          } else {
            detail::correlate_plane(dk, gp, ip, g.height, g.width, oh, ow, g.kernel, g.stride, g.padding);
          }
        }
      }
    }
  }
}

void dynamic_depthwise_forward(int batch, int channels, int height, int width, int k, Padding padding,
                               std::span<const Real> x, std::span<const Real> kern, std::span<Real> out) {
  const std::int64_t plane = static_cast<std::int64_t>(height) * width;
  const std::int64_t planes = static_cast<std::int64_t>(batch) * channels;
  count_macs(planes * plane * k * k);
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    Real* op = out.data() + idx * plane;
    std::fill(op, op + plane, Real(0));
    detail::accumulate_plane(op, x.data() + idx * plane, height, width, height, width, k, 1, padding,
                             kern.data() + idx * k * k);
  }
}

void dynamic_depthwise_backward(int batch, int channels, int height, int width, int k, Padding padding,
                                std::span<const Real> x, std::span<const Real> kern,
                                std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dkern) {
  const std::int64_t plane = static_cast<std::int64_t>(height) * width;
  const std::int64_t planes = static_cast<std::int64_t>(batch) * channels;
  count_macs(2 * planes * plane * k * k);
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const Real* gp = grad_out.data() + idx * plane;
    if (!dx.empty()) {
      detail::scatter_plane(dx.data() + idx * plane, gp, height, width, height, width, k, 1, padding,
                            kern.data() + idx * k * k);
    }
    if (!dkern.empty()) {
      detail::correlate_plane(dkern.data() + idx * k * k, gp, x.data() + idx * plane, height, width, height,
                              width, k, 1, padding);
    }
  }
}

// ---- Bilinear sampling ------------------------------------------------------

void bilinear_forward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                      std::span<Real> out) {
  const std::int64_t plane = static_cast<std::int64_t>(g.height) * g.width;
  const std::int64_t planes = static_cast<std::int64_t>(g.batch) * g.channels;
  const int per_group = g.channels / g.groups;
  count_macs(planes * plane * 4);
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < planes; ++idx) {
    const std::int64_t n = idx / g.channels;
    const int grp = static_cast<int>(idx % g.channels) / per_group;
    const Real* rows = coords.data() + (n * 2 * g.groups + 2 * grp) * plane;
    const Real* cols = rows + plane;
    const Real* xp = x.data() + idx * plane;
    Real* op = out.data() + idx * plane;
    for (std::int64_t p = 0; p < plane; ++p) {
      const detail::BilinearTap t(rows[p], cols[p], g.height, g.width);
      op[p] = t.sample(xp, g.width);
    }
  }
}

void bilinear_backward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                       std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dcoords) {
  const std::int64_t plane = static_cast<std::int64_t>(g.height) * g.width;
  const std::int64_t planes = static_cast<std::int64_t>(g.batch) * g.channels;
  const int per_group = g.channels / g.groups;
  count_macs(planes * plane * 8);
  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t idx = 0; idx < planes; ++idx) {
      const std::int64_t n = idx / g.channels;
      const int grp = static_cast<int>(idx % g.channels) / per_group;
      const Real* rows = coords.data() + (n * 2 * g.groups + 2 * grp) * plane;
      const Real* cols = rows + plane;
      const Real* gp = grad_out.data() + idx * plane;
      Real* dp = dx.data() + idx * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const detail::BilinearTap t(rows[p], cols[p], g.height, g.width);
        t.scatter(dp, g.width, gp[p]);
      }
    }
  }
  if (!dcoords.empty()) {
    const std::int64_t groups = static_cast<std::int64_t>(g.batch) * g.groups;
#pragma omp parallel for schedule(static)
    for (std::int64_t idx = 0; idx < groups; ++idx) {
      const std::int64_t n = idx / g.groups;
      const int grp = static_cast<int>(idx % g.groups);
      const Real* rows = coords.data() + idx * 2 * plane;
      const Real* cols = rows + plane;
      Real* drows = dcoords.data() + idx * 2 * plane;
      Real* dcols = drows + plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const detail::BilinearTap t(rows[p], cols[p], g.height, g.width);
        Real dr = 0;
        Real dc = 0;
        for (int ci = 0; ci < per_group; ++ci) {
          const std::int64_t c = static_cast<std::int64_t>(grp) * per_group + ci;
          const std::int64_t off = (n * g.channels + c) * plane;
          const Real gv = grad_out[static_cast<std::size_t>(off + p)];
          dr += gv * t.d_row(x.data() + off, g.width);
          dc += gv * t.d_col(x.data() + off, g.width);
        }
        drows[p] += dr;
        dcols[p] += dc;
      }
    }
  }
}

// ---- Layer norm -------------------------------------------------------------

void layer_norm_forward(int batch, int channels, int spatial, Real eps, std::span<const Real> x,
                        std::span<const Real> gain, std::span<const Real> bias, std::span<Real> out,
                        std::span<Real> mean, std::span<Real> rstd) {
  count_macs(static_cast<std::int64_t>(batch) * channels * spatial * 4);
  const Real inv_c = Real(1) / static_cast<Real>(channels);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    const Real* xn = x.data() + static_cast<std::int64_t>(n) * channels * spatial;
    Real* on = out.data() + static_cast<std::int64_t>(n) * channels * spatial;
    Real* mu = mean.data() + static_cast<std::int64_t>(n) * spatial;
    Real* rs = rstd.data() + static_cast<std::int64_t>(n) * spatial;
    std::fill(mu, mu + spatial, Real(0));
    std::fill(rs, rs + spatial, Real(0));
    for (int c = 0; c < channels; ++c) {
      const Real* xc = xn + static_cast<std::int64_t>(c) * spatial;
      for (int p = 0; p < spatial; ++p) mu[p] += xc[p];
    }
    for (int p = 0; p < spatial; ++p) mu[p] *= inv_c;
    for (int c = 0; c < channels; ++c) {
      const Real* xc = xn + static_cast<std::int64_t>(c) * spatial;
      for (int p = 0; p < spatial; ++p) {
        const Real d = xc[p] - mu[p];
        rs[p] += d * d;
      }
    }
    for (int p = 0; p < spatial; ++p) rs[p] = Real(1) / std::sqrt(rs[p] * inv_c + eps);
    for (int c = 0; c < channels; ++c) {
      const Real* xc = xn + static_cast<std::int64_t>(c) * spatial;
      Real* oc = on + static_cast<std::int64_t>(c) * spatial;
      const Real gc = gain[static_cast<std::size_t>(c)];
      const Real bc = bias[static_cast<std::size_t>(c)];
      for (int p = 0; p < spatial; ++p) oc[p] = (xc[p] - mu[p]) * rs[p] * gc + bc;
    }
  }
}

void layer_norm_backward(int batch, int channels, int spatial, std::span<const Real> x,
                         std::span<const Real> gain, std::span<const Real> mean, std::span<const Real> rstd,
                         std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dgain,
                         std::span<Real> dbias) {
  count_macs(static_cast<std::int64_t>(batch) * channels * spatial * 8);
  const Real inv_c = Real(1) / static_cast<Real>(channels);
  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (int n = 0; n < batch; ++n) {
      const std::int64_t base = static_cast<std::int64_t>(n) * channels * spatial;
      const Real* mu = mean.data() + static_cast<std::int64_t>(n) * spatial;
      const Real* rs = rstd.data() + static_cast<std::int64_t>(n) * spatial;
      std::vector<Real> sum_g(static_cast<std::size_t>(spatial), Real(0));
      std::vector<Real> sum_gx(static_cast<std::size_t>(spatial), Real(0));
      for (int c = 0; c < channels; ++c) {
        const Real* xc = x.data() + base + static_cast<std::int64_t>(c) * spatial;
        const Real* gc = grad_out.data() + base + static_cast<std::int64_t>(c) * spatial;
        const Real gn = gain[static_cast<std::size_t>(c)];
        for (int p = 0; p < spatial; ++p) {
          const Real dh = gc[p] * gn;
          sum_g[static_cast<std::size_t>(p)] += dh;
          sum_gx[static_cast<std::size_t>(p)] += dh * (xc[p] - mu[p]) * rs[p];
        }
      }
      for (int c = 0; c < channels; ++c) {
        const Real* xc = x.data() + base + static_cast<std::int64_t>(c) * spatial;
        const Real* gc = grad_out.data() + base + static_cast<std::int64_t>(c) * spatial;
        Real* dc = dx.data() + base + static_cast<std::int64_t>(c) * spatial;
        const Real gn = gain[static_cast<std::size_t>(c)];
        for (int p = 0; p < spatial; ++p) {
          const Real xhat = (xc[p] - mu[p]) * rs[p];
          dc[p] += rs[p] * (gc[p] * gn - inv_c * sum_g[static_cast<std::size_t>(p)] -
                            xhat * inv_c * sum_gx[static_cast<std::size_t>(p)]);
        }
      }
    }
  }
  if (!dgain.empty() || !dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
      Real sg = 0;
      Real sgx = 0;
      for (int n = 0; n < batch; ++n) {
        const std::int64_t off = (static_cast<std::int64_t>(n) * channels + c) * spatial;
        const Real* xc = x.data() + off;
        const Real* gc = grad_out.data() + off;
        const Real* mu = mean.data() + static_cast<std::int64_t>(n) * spatial;
        const Real* rs = rstd.data() + static_cast<std::int64_t>(n) * spatial;
        for (int p = 0; p < spatial; ++p) {
          sg += gc[p];
          sgx += gc[p] * (xc[p] - mu[p]) * rs[p];
        }
      }
      if (!dgain.empty()) dgain[static_cast<std::size_t>(c)] += sgx;
      if (!dbias.empty()) dbias[static_cast<std::size_t>(c)] += sg;
    }
  }
}

// ---- FFT --------------------------------------------------------------------

namespace {

struct FftPlan {
  std::size_t n = 0;
  bool pow2 = false;
  std::vector<std::size_t> bitrev;
  std::vector<Complex> twiddle;      // e^{-2 pi i j / n}, j < n/2
  std::vector<Complex> twiddle_inv;  // conjugates of twiddle
  // Bluestein
  std::size_t m = 0;
  std::vector<Complex> chirp;       // e^{-i pi j^2 / n}
  std::vector<Complex> kernel_fft;  // FFT_m of conj(chirp) wrapped
};

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::shared_ptr<const FftPlan> get_plan(std::size_t n);

inline Complex cmul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

void radix2(const FftPlan& plan, Complex* a, bool inverse) {
  const std::size_t n = plan.n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = plan.bitrev[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    const Complex u = a[i];
    const Complex t = a[i + 1];
    a[i] = u + t;
    a[i + 1] = u - t;
  }
  const Complex* tw = inverse ? plan.twiddle_inv.data() : plan.twiddle.data();
  for (std::size_t len = 4; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const Complex w = tw[j * step];
        const Complex u = a[i + j];
        const Complex t = cmul(a[i + j + half], w);
        a[i + j] = u + t;
        a[i + j + half] = u - t;
      }
    }
  }
}

std::shared_ptr<const FftPlan> build_plan(std::size_t n) {
  auto plan = std::make_shared<FftPlan>();
  plan->n = n;
  plan->pow2 = is_pow2(n);
  if (plan->pow2) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    plan->bitrev.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) {
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      }
      plan->bitrev[i] = r;
    }
    plan->twiddle.resize(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      plan->twiddle[j] = Complex(static_cast<Real>(std::cos(ang)), static_cast<Real>(std::sin(ang)));
    }
    plan->twiddle_inv.resize(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) plan->twiddle_inv[j] = std::conj(plan->twiddle[j]);
    return plan;
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  plan->m = m;
  plan->chirp.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t jj = (j * j) % (2 * n);
    const double ang = -std::numbers::pi * static_cast<double>(jj) / static_cast<double>(n);
    plan->chirp[j] = Complex(static_cast<Real>(std::cos(ang)), static_cast<Real>(std::sin(ang)));
  }
  plan->kernel_fft.assign(m, Complex(0, 0));
  plan->kernel_fft[0] = std::conj(plan->chirp[0]);
  for (std::size_t j = 1; j < n; ++j) {
    plan->kernel_fft[j] = std::conj(plan->chirp[j]);
    plan->kernel_fft[m - j] = std::conj(plan->chirp[j]);
  }
  auto sub = get_plan(m);
  radix2(*sub, plan->kernel_fft.data(), false);
  return plan;
}

std::shared_ptr<const FftPlan> get_plan(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const FftPlan>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
  }
  auto plan = build_plan(n);
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(n, std::move(plan)).first->second;
}

void bluestein(const FftPlan& plan, Complex* a, bool inverse) {
  const std::size_t n = plan.n;
  const std::size_t m = plan.m;
  const auto sub = get_plan(m);
  std::vector<Complex> buf(m, Complex(0, 0));
  for (std::size_t j = 0; j < n; ++j) {
    const Complex xj = inverse ? std::conj(a[j]) : a[j];
    buf[j] = cmul(xj, plan.chirp[j]);
  }
  radix2(*sub, buf.data(), false);
  for (std::size_t j = 0; j < m; ++j) buf[j] = cmul(buf[j], plan.kernel_fft[j]);
  radix2(*sub, buf.data(), true);
  const Real inv_m = Real(1) / static_cast<Real>(m);
  for (std::size_t j = 0; j < n; ++j) {
    const Complex r = cmul(buf[j], plan.chirp[j]) * inv_m;
    a[j] = inverse ? std::conj(r) : r;
  }
}

std::int64_t fft_macs(std::size_t n) {
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  return static_cast<std::int64_t>(2 * n * std::max<std::size_t>(bits, 1));
}

// Plans live in the cache until exit, so a raw pointer to the most recent one
// can be kept per thread.
const FftPlan* lookup_plan(std::size_t n) {
  thread_local const FftPlan* last = nullptr;
  if (last == nullptr || last->n != n) last = get_plan(n).get();
  return last;
}

}  // namespace

void fft(std::span<Complex> data, bool inverse) {
  const std::size_t n = data.size();
  if (n <= 1) return;
  const FftPlan* plan = lookup_plan(n);
  if (plan->pow2) {
    count_macs(fft_macs(n));
    radix2(*plan, data.data(), inverse);
  } else {
    count_macs(3 * fft_macs(plan->m) + static_cast<std::int64_t>(8 * n));
    bluestein(*plan, data.data(), inverse);
  }
}

namespace detail {

void rfft2_plane(int height, int width, const Real* x, Real* re, Real* im) {
  const int wf = width / 2 + 1;
  std::vector<Complex> spec(static_cast<std::size_t>(height) * wf);
  std::vector<Complex> row(static_cast<std::size_t>(width));
  // Two real rows per complex transform: z = a + i b.
  for (int h = 0; h < height; h += 2) {
    const bool pair = h + 1 < height;
    const Real* a = x + static_cast<std::ptrdiff_t>(h) * width;
    const Real* b = pair ? a + width : nullptr;
    for (int w = 0; w < width; ++w) row[static_cast<std::size_t>(w)] = Complex(a[w], pair ? b[w] : Real(0));
    fft(row, false);
    Complex* sa = spec.data() + static_cast<std::ptrdiff_t>(h) * wf;
    if (!pair) {
      for (int v = 0; v < wf; ++v) sa[v] = row[static_cast<std::size_t>(v)];
      continue;
    }
    Complex* sb = sa + wf;
    for (int v = 0; v < wf; ++v) {
      const Complex z = row[static_cast<std::size_t>(v)];
      const Complex zc = std::conj(row[static_cast<std::size_t>((width - v) % width)]);
      sa[v] = Complex((z.real() + zc.real()) * Real(0.5), (z.imag() + zc.imag()) * Real(0.5));
      // (z - zc) / (2i)
      sb[v] = Complex((z.imag() - zc.imag()) * Real(0.5), -(z.real() - zc.real()) * Real(0.5));
    }
  }
  std::vector<Complex> col(static_cast<std::size_t>(height));
  for (int v = 0; v < wf; ++v) {
    for (int h = 0; h < height; ++h) col[static_cast<std::size_t>(h)] = spec[static_cast<std::size_t>(h) * wf + v];
    fft(col, false);
    for (int h = 0; h < height; ++h) {
      re[static_cast<std::ptrdiff_t>(h) * wf + v] = col[static_cast<std::size_t>(h)].real();
      im[static_cast<std::ptrdiff_t>(h) * wf + v] = col[static_cast<std::size_t>(h)].imag();
    }
  }
}

void irfft2_plane(int height, int width, const Real* re, const Real* im, Real* x) {
  const int wf = width / 2 + 1;
  std::vector<Complex> spec(static_cast<std::size_t>(height) * wf);
  std::vector<Complex> col(static_cast<std::size_t>(height));
  for (int v = 0; v < wf; ++v) {
    for (int h = 0; h < height; ++h) {
      const std::size_t i = static_cast<std::size_t>(h) * wf + v;
      col[static_cast<std::size_t>(h)] = Complex(re[i], im[i]);
    }
    fft(col, true);
    for (int h = 0; h < height; ++h) spec[static_cast<std::size_t>(h) * wf + v] = col[static_cast<std::size_t>(h)];
  }
  std::vector<Complex> row(static_cast<std::size_t>(width));
  const Real scale = Real(1) / (static_cast<Real>(height) * static_cast<Real>(width));
  for (int h = 0; h < height; ++h) {
    const Complex* s = spec.data() + static_cast<std::ptrdiff_t>(h) * wf;
    for (int v = 0; v < wf; ++v) row[static_cast<std::size_t>(v)] = s[v];
    row[0] = Complex(row[0].real(), 0);
    if (width % 2 == 0) row[static_cast<std::size_t>(width / 2)] = Complex(row[static_cast<std::size_t>(width / 2)].real(), 0);
    for (int v = 1; v < wf; ++v) {
      if (width - v >= wf) row[static_cast<std::size_t>(width - v)] = std::conj(s[v]);
    }
    fft(row, true);
    Real* xr = x + static_cast<std::ptrdiff_t>(h) * width;
    for (int w = 0; w < width; ++w) xr[w] = row[static_cast<std::size_t>(w)].real() * scale;
  }
}

}  // namespace detail

void rfft2_planes(int planes, int height, int width, std::span<const Real> x, std::span<Real> re,
                  std::span<Real> im) {
  const std::int64_t in_plane = static_cast<std::int64_t>(height) * width;
  const std::int64_t out_plane = static_cast<std::int64_t>(height) * (width / 2 + 1);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    detail::rfft2_plane(height, width, x.data() + p * in_plane, re.data() + p * out_plane,
                        im.data() + p * out_plane);
  }
}

void irfft2_planes(int planes, int height, int width, std::span<const Real> re, std::span<const Real> im,
                   std::span<Real> x) {
  const std::int64_t in_plane = static_cast<std::int64_t>(height) * (width / 2 + 1);
  const std::int64_t out_plane = static_cast<std::int64_t>(height) * width;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    detail::irfft2_plane(height, width, re.data() + p * in_plane, im.data() + p * in_plane,
                         x.data() + p * out_plane);
  }
}

// ---- Bidirectional WKV ------------------------------------------------------

namespace detail {

namespace {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

// Running decayed sum in log-shifted form: true value = exp(offset) * mantissa.
struct DecayedSum {
  Real offset = kNegInf;
  Real a = 0;   // zeroth moment, first payload
  Real b = 0;   // zeroth moment, second payload
  Real ma = 0;  // first moment (distance-weighted), first payload
  Real mb = 0;

  // Advances by one token: existing terms decay by exp(-decay), then the token
  // with log-weight `logw` and payloads (xa, xb) enters with distance 0.
  void push(Real decay, Real logw, Real xa, Real xb) {
    const Real decayed = offset - decay;
    const Real next = std::max(decayed, logw);
    const Real keep = std::exp(decayed - next);
    const Real add = std::exp(logw - next);
    ma = (ma + a) * keep;
    mb = (mb + b) * keep;
    a = a * keep + xa * add;
    b = b * keep + xb * add;
    offset = next;
  }
};

}  // namespace

void wkv_row_forward(int length, Real decay, Real bonus, const Real* k, const Real* v, Real* out,
                     Real* log_den) {
  std::vector<DecayedSum> fwd(static_cast<std::size_t>(length));
  DecayedSum s;
  for (int t = 0; t < length; ++t) {
    fwd[static_cast<std::size_t>(t)] = s;
    s.push(decay, k[t], v[t], Real(1));
  }
  s = DecayedSum{};
  for (int t = length - 1; t >= 0; --t) {
    const DecayedSum& f = fwd[static_cast<std::size_t>(t)];
    const Real self = bonus + k[t];
    const Real m = std::max({f.offset, s.offset, self});
    const Real ef = std::exp(f.offset - m);
    const Real eb = std::exp(s.offset - m);
    const Real es = std::exp(self - m);
    const Real num = f.a * ef + s.a * eb + v[t] * es;
    const Real den = f.b * ef + s.b * eb + es;
    out[t] = num / den;
    if (log_den != nullptr) log_den[t] = m + std::log(den);
    s.push(decay, k[t], v[t], Real(1));
  }
}

void wkv_row_backward(int length, Real decay, Real bonus, const Real* k, const Real* v, const Real* out,
                      const Real* log_den, const Real* grad, Real* dk, Real* dv, Real& ddecay, Real& dbonus) {
  // Forward-direction exclusive states: moments of e^{k_i}(v_i, 1) for the
  // decay gradient and of e^{-log_den_t}(g_t, g_t out_t) for dk/dv.
  std::vector<DecayedSum> fwd_kv(static_cast<std::size_t>(length));
  std::vector<DecayedSum> fwd_g(static_cast<std::size_t>(length));
  DecayedSum skv;
  DecayedSum sg;
  for (int t = 0; t < length; ++t) {
    fwd_kv[static_cast<std::size_t>(t)] = skv;
    fwd_g[static_cast<std::size_t>(t)] = sg;
    skv.push(decay, k[t], v[t], Real(1));
    sg.push(decay, -log_den[t], grad[t], grad[t] * out[t]);
  }
  skv = DecayedSum{};
  sg = DecayedSum{};
  Real dd = 0;
  Real du = 0;
  for (int t = length - 1; t >= 0; --t) {
    const DecayedSum& fkv = fwd_kv[static_cast<std::size_t>(t)];
    const DecayedSum& fg = fwd_g[static_cast<std::size_t>(t)];
    const Real gt = grad[t];
    const Real ot = out[t];

    // Decay: -sum_{i != t} (|t-i|-1) W_ti / S_t * g_t (v_i - out_t).
    const Real ef = std::exp(fkv.offset - log_den[t]);
    const Real eb = std::exp(skv.offset - log_den[t]);
    dd -= gt * (ef * (fkv.ma - ot * fkv.mb) + eb * (skv.ma - ot * skv.mb));

    // Sums over receivers t' != t of normalized weights from token t.
    const Real gf = std::exp(fg.offset + k[t]);
    const Real gb = std::exp(sg.offset + k[t]);
    const Real recv_g = fg.a * gf + sg.a * gb;
    const Real recv_go = fg.b * gf + sg.b * gb;
    const Real self_w = std::exp(bonus + k[t] - log_den[t]);
    const Real dv_t = recv_g + self_w * gt;
    dv[t] += dv_t;
    dk[t] += v[t] * dv_t - (recv_go + self_w * gt * ot);
    du += self_w * gt * (v[t] - ot);

    skv.push(decay, k[t], v[t], Real(1));
    sg.push(decay, -log_den[t], gt, gt * ot);
  }
  ddecay += dd;
  dbonus += du;
}

}  // namespace detail

void wkv_forward(const WkvGeometry& g, std::span<const Real> k, std::span<const Real> v,
                 std::span<const Real> w_raw, std::span<const Real> u, std::span<Real> out,
                 std::span<Real> log_den) {
  const std::int64_t rows = static_cast<std::int64_t>(g.batch) * g.channels;
  count_macs(rows * g.length * 16);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const int c = static_cast<int>(r % g.channels);
    const Real decay = std::exp(w_raw[static_cast<std::size_t>(c)]) / static_cast<Real>(g.length);
    const std::int64_t off = r * g.length;
    detail::wkv_row_forward(g.length, decay, u[static_cast<std::size_t>(c)], k.data() + off, v.data() + off,
                            out.data() + off, log_den.empty() ? nullptr : log_den.data() + off);
  }
}

void wkv_backward(const WkvGeometry& g, std::span<const Real> k, std::span<const Real> v,
                  std::span<const Real> w_raw, std::span<const Real> u, std::span<const Real> out,
                  std::span<const Real> log_den, std::span<const Real> grad_out, std::span<Real> dk,
                  std::span<Real> dv, std::span<Real> dw_raw, std::span<Real> du) {
  count_macs(static_cast<std::int64_t>(g.batch) * g.channels * g.length * 40);
  std::vector<Real> scratch_dk;
  std::vector<Real> scratch_dv;
  if (dk.empty()) scratch_dk.assign(k.size(), Real(0));
  if (dv.empty()) scratch_dv.assign(v.size(), Real(0));
  Real* dk_ptr = dk.empty() ? scratch_dk.data() : dk.data();
  Real* dv_ptr = dv.empty() ? scratch_dv.data() : dv.data();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    const Real decay = std::exp(w_raw[static_cast<std::size_t>(c)]) / static_cast<Real>(g.length);
    Real ddecay = 0;
    Real dbonus = 0;
    for (int n = 0; n < g.batch; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * g.channels + c) * g.length;
      detail::wkv_row_backward(g.length, decay, u[static_cast<std::size_t>(c)], k.data() + off, v.data() + off,
                               out.data() + off, log_den.data() + off, grad_out.data() + off, dk_ptr + off,
                               dv_ptr + off, ddecay, dbonus);
    }
    if (!dw_raw.empty()) dw_raw[static_cast<std::size_t>(c)] += ddecay * decay;
    if (!du.empty()) du[static_cast<std::size_t>(c)] += dbonus;
  }
}

}  // namespace kernels
FRWKV_END_NAMESPACE
