#include <algorithm>
#include <cmath>

#include "frwkv/kernels.hpp"
#include "kernels_internal.hpp"

FRWKV_BEGIN_NAMESPACE
namespace kernels::serial {

namespace {

// Input index for output position `o` and tap `t`, or -1 when the tap falls
// in zero padding.
int source_index(int o, int t, int stride, int pad, int extent, Padding padding) {
  const int i = o * stride + t - pad;
  if (i >= 0 && i < extent) return i;
  if (padding == Padding::zero) return -1;
  return std::clamp(i, 0, extent - 1);
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> out) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int cin_per = g.depthwise ? 1 : g.in_ch;
  const int k = g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_ch; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo) {
          Real acc = bias.empty() ? Real(0) : bias[static_cast<std::size_t>(o)];
          for (int ci = 0; ci < cin_per; ++ci) {
            const int i = g.depthwise ? o : ci;
            for (int kh = 0; kh < k; ++kh) {
              const int ih = source_index(y, kh, g.stride, g.pad(), g.height, g.padding);
              if (ih < 0) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int iw = source_index(xo, kw, g.stride, g.pad(), g.width, g.padding);
                if (iw < 0) continue;
                const Real xv = x[static_cast<std::size_t>(((n * g.in_ch + i) * g.height + ih) * g.width + iw)];
                const Real wv = weight[static_cast<std::size_t>(((o * cin_per + ci) * k + kh) * k + kw)];
                acc += xv * wv;
              }
            }
          }
          out[static_cast<std::size_t>(((n * g.out_ch + o) * oh + y) * ow + xo)] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                     std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dweight,
                     std::span<Real> dbias) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int cin_per = g.depthwise ? 1 : g.in_ch;
  const int k = g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_ch; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo) {
          const Real gv = grad_out[static_cast<std::size_t>(((n * g.out_ch + o) * oh + y) * ow + xo)];
          if (!dbias.empty()) dbias[static_cast<std::size_t>(o)] += gv;
          for (int ci = 0; ci < cin_per; ++ci) {
            const int i = g.depthwise ? o : ci;
            for (int kh = 0; kh < k; ++kh) {
              const int ih = source_index(y, kh, g.stride, g.pad(), g.height, g.padding);
              if (ih < 0) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int iw = source_index(xo, kw, g.stride, g.pad(), g.width, g.padding);
                if (iw < 0) continue;
                const std::size_t xi = static_cast<std::size_t>(((n * g.in_ch + i) * g.height + ih) * g.width + iw);
                const std::size_t wi = static_cast<std::size_t>(((o * cin_per + ci) * k + kh) * k + kw);
                if (!dx.empty()) dx[xi] += gv * weight[wi];
                if (!dweight.empty()) dweight[wi] += gv * x[xi];
              }
            }
          }
        }
      }
    }
  }
}

void bilinear_forward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                      std::span<Real> out) {
  const int per_group = g.channels / g.groups;
  const int plane = g.height * g.width;
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < g.channels; ++c) {
      const int grp = c / per_group;
      for (int p = 0; p < plane; ++p) {
        const Real row = coords[static_cast<std::size_t>((n * 2 * g.groups + 2 * grp) * plane + p)];
        const Real col = coords[static_cast<std::size_t>((n * 2 * g.groups + 2 * grp + 1) * plane + p)];
        const detail::BilinearTap t(row, col, g.height, g.width);
        const std::size_t off = static_cast<std::size_t>((n * g.channels + c) * plane);
        out[off + static_cast<std::size_t>(p)] = t.sample(x.data() + off, g.width);
      }
    }
  }
}

void bilinear_backward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                       std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dcoords) {
  const int per_group = g.channels / g.groups;
  const int plane = g.height * g.width;
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < g.channels; ++c) {
      const int grp = c / per_group;
      const std::size_t off = static_cast<std::size_t>((n * g.channels + c) * plane);
      for (int p = 0; p < plane; ++p) {
        const std::size_t ri = static_cast<std::size_t>((n * 2 * g.groups + 2 * grp) * plane + p);
        const std::size_t ci = ri + static_cast<std::size_t>(plane);
        const detail::BilinearTap t(coords[ri], coords[ci], g.height, g.width);
        const Real gv = grad_out[off + static_cast<std::size_t>(p)];
        if (!dx.empty()) t.scatter(dx.data() + off, g.width, gv);
        if (!dcoords.empty()) {
          dcoords[ri] += gv * t.d_row(x.data() + off, g.width);
          dcoords[ci] += gv * t.d_col(x.data() + off, g.width);
        }
      }
    }
  }
}

void rfft2_planes(int planes, int height, int width, std::span<const Real> x, std::span<Real> re,
                  std::span<Real> im) {
  const std::int64_t in_plane = static_cast<std::int64_t>(height) * width;
  const std::int64_t out_plane = static_cast<std::int64_t>(height) * (width / 2 + 1);
  for (int p = 0; p < planes; ++p) {
    detail::rfft2_plane(height, width, x.data() + p * in_plane, re.data() + p * out_plane,
                        im.data() + p * out_plane);
  }
}

void wkv_forward(const WkvGeometry& g, std::span<const Real> k, std::span<const Real> v,
                 std::span<const Real> w_raw, std::span<const Real> u, std::span<Real> out) {
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < g.channels; ++c) {
      const Real decay = std::exp(w_raw[static_cast<std::size_t>(c)]) / static_cast<Real>(g.length);
      const std::int64_t off = (static_cast<std::int64_t>(n) * g.channels + c) * g.length;
      detail::wkv_row_forward(g.length, decay, u[static_cast<std::size_t>(c)], k.data() + off, v.data() + off,
                              out.data() + off, nullptr);
    }
  }
}

}  // namespace kernels::serial
FRWKV_END_NAMESPACE
