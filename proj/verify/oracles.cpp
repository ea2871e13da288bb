#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <tuple>

FRWKV_BEGIN_NAMESPACE
namespace oracle {

namespace {

using LD = long double;

// Flat NCHW indexer.
struct Ix {
  int c, h, w;
  explicit Ix(const Shape& s) : c(s.c()), h(s.h()), w(s.w()) {}
  std::size_t operator()(int n, int ch, int y, int x) const {
    return static_cast<std::size_t>(((static_cast<std::int64_t>(n) * c + ch) * h + y) * w + x);
  }
};

Tensor make(const Shape& s, const std::vector<double>& v) {
  return Tensor::from_data(s, std::vector<Real>(v.begin(), v.end()));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

// Per-pixel 1x1 projection: out[o] = b[o] + sum_i W[o,i] in[i].
Tensor project(const Tensor& x, const ConvLayer& layer) {
  if (!layer.weight.defined()) throw std::logic_error("oracle: missing projection");
  return oracle::conv2d(x, layer.spec, layer.weight, layer.bias);
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (double& e : v) e = f(e);
  return make(x.shape(), v);
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape()) throw std::invalid_argument("oracle: shape mismatch");
  std::vector<double> v(static_cast<std::size_t>(a.numel()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(static_cast<double>(a.data()[i]), static_cast<double>(b.data()[i]));
  return make(a.shape(), v);
}

// a (N,C,H,W) times per-channel vector (C).
Tensor scale_channels(const Tensor& a, const Tensor& vec, double offset) {
  const Shape& s = a.shape();
  std::vector<double> v(static_cast<std::size_t>(a.numel()));
  const Ix ix(s);
  for (int n = 0; n < s.n(); ++n)
    for (int c = 0; c < s.c(); ++c)
      for (int y = 0; y < s.h(); ++y)
        for (int x = 0; x < s.w(); ++x)
          v[ix(n, c, y, x)] = a.data()[ix(n, c, y, x)] * (offset + vec.data()[static_cast<std::size_t>(c)]);
  return make(s, v);
}

}  // namespace

// ---- Spectral ---------------------------------------------------------------------

std::pair<Tensor, Tensor> dft2(const Tensor& x) {
  const Shape& s = x.shape();
  const int h = s.h();
  const int w = s.w();
  const int wf = w / 2 + 1;
  const Shape out{s.n(), s.c(), h, wf};
  std::vector<double> re(static_cast<std::size_t>(out.numel()));
  std::vector<double> im(re.size());
  const Ix ix(s);
  const Ix ox(out);
  const LD two_pi = 2 * std::numbers::pi_v<LD>;
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      for (int u = 0; u < h; ++u) {
        for (int v = 0; v < wf; ++v) {
          LD ar = 0;
          LD ai = 0;
          for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
              const LD th = -two_pi * (static_cast<LD>(u) * y / h + static_cast<LD>(v) * xx / w);
              const LD val = x.data()[ix(n, c, y, xx)];
              ar += val * std::cos(th);
              ai += val * std::sin(th);
            }
          }
          re[ox(n, c, u, v)] = static_cast<double>(ar);
          im[ox(n, c, u, v)] = static_cast<double>(ai);
        }
      }
    }
  }
  return {make(out, re), make(out, im)};
}

Tensor idft2(const Tensor& re, const Tensor& im, int src_width) {
  const Shape& s = re.shape();
  const int h = s.h();
  const int wf = s.w();
  const int w = src_width;
  const Shape out{s.n(), s.c(), h, w};
  std::vector<double> x(static_cast<std::size_t>(out.numel()));
  const Ix ix(s);
  const Ix ox(out);
  const LD two_pi = 2 * std::numbers::pi_v<LD>;
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          LD acc = 0;
          for (int u = 0; u < h; ++u) {
            for (int v = 0; v < wf; ++v) {
              const LD weight = (v == 0 || (w % 2 == 0 && v == w / 2)) ? 1 : 2;
              const LD th = two_pi * (static_cast<LD>(u) * y / h + static_cast<LD>(v) * xx / w);
              acc += weight * (re.data()[ix(n, c, u, v)] * std::cos(th) - im.data()[ix(n, c, u, v)] * std::sin(th));
            }
          }
          x[ox(n, c, y, xx)] = static_cast<double>(acc / (static_cast<LD>(h) * w));
        }
      }
    }
  }
  return make(out, x);
}

std::vector<int> ordering(int height, int width_f) {
  std::vector<std::tuple<double, int>> pts;
  for (int h = 0; h < height; ++h) {
    for (int w = 0; w < width_f; ++w) {
      const double fh = std::min(h, height - h);
      pts.emplace_back(std::sqrt(fh * fh + static_cast<double>(w) * w), h * width_f + w);
    }
  }
  std::sort(pts.begin(), pts.end());
  std::vector<int> perm;
  for (const auto& p : pts) perm.push_back(std::get<1>(p));
  return perm;
}

// ---- Primitives ---------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Conv2dSpec& spec, const Tensor& weight, const Tensor& bias) {
  const Shape& s = x.shape();
  const int k = spec.kernel;
  const int pad = k / 2;
  const int oh = (s.h() + spec.stride - 1) / spec.stride;
  const int ow = (s.w() + spec.stride - 1) / spec.stride;
  const Shape out{s.n(), spec.out_ch, oh, ow};
  std::vector<double> o(static_cast<std::size_t>(out.numel()));
  const Ix ix(s);
  const Ix ox(out);
  const int per = spec.depthwise ? 1 : spec.in_ch;
  for (int n = 0; n < s.n(); ++n) {
    for (int oc = 0; oc < spec.out_ch; ++oc) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          LD acc = bias.defined() ? bias.data()[static_cast<std::size_t>(oc)] : 0;
          for (int ci = 0; ci < per; ++ci) {
            const int ic = spec.depthwise ? oc : ci;
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                int sy = y * spec.stride + ky - pad;
                int sx = xx * spec.stride + kx - pad;
                if (spec.padding == Padding::zero && (sy < 0 || sy >= s.h() || sx < 0 || sx >= s.w())) continue;
                sy = std::clamp(sy, 0, s.h() - 1);
                sx = std::clamp(sx, 0, s.w() - 1);
                acc += static_cast<LD>(weight.data()[static_cast<std::size_t>(((oc * per + ci) * k + ky) * k + kx)]) *
                       x.data()[ix(n, ic, sy, sx)];
              }
            }
          }
          o[ox(n, oc, y, xx)] = static_cast<double>(acc);
        }
      }
    }
  }
  return make(out, o);
}

Tensor bilinear(const Tensor& x, const Tensor& coords, int groups) {
  const Shape& s = x.shape();
  const Ix ix(s);
  const Ix cx(coords.shape());
  const int per = s.c() / groups;
  std::vector<double> o(static_cast<std::size_t>(x.numel()));
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      const int g = c / per;
      for (int y = 0; y < s.h(); ++y) {
        for (int xx = 0; xx < s.w(); ++xx) {
          const double r = std::clamp<double>(coords.data()[cx(n, 2 * g, y, xx)], 0.0, s.h() - 1);
          const double q = std::clamp<double>(coords.data()[cx(n, 2 * g + 1, y, xx)], 0.0, s.w() - 1);
          const int r0 = static_cast<int>(std::floor(r));
          const int q0 = static_cast<int>(std::floor(q));
          double acc = 0;
          for (int dr = 0; dr <= 1; ++dr) {
            for (int dq = 0; dq <= 1; ++dq) {
              const int rr = r0 + dr;
              const int qq = q0 + dq;
              const double wr = dr ? r - r0 : 1 - (r - r0);
              const double wq = dq ? q - q0 : 1 - (q - q0);
              if (wr == 0 || wq == 0) continue;
              acc += wr * wq * x.data()[ix(n, c, std::min(rr, s.h() - 1), std::min(qq, s.w() - 1))];
            }
          }
          o[ix(n, c, y, xx)] = acc;
        }
      }
    }
  }
  return make(s, o);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Shape& s = x.shape();
  const Ix ix(s);
  std::vector<double> o(static_cast<std::size_t>(x.numel()));
  for (int n = 0; n < s.n(); ++n) {
    for (int y = 0; y < s.h(); ++y) {
      for (int xx = 0; xx < s.w(); ++xx) {
        LD mean = 0;
        for (int c = 0; c < s.c(); ++c) mean += x.data()[ix(n, c, y, xx)];
        mean /= s.c();
        LD var = 0;
        for (int c = 0; c < s.c(); ++c) {
          const LD d = x.data()[ix(n, c, y, xx)] - mean;
          var += d * d;
        }
        var /= s.c();
        for (int c = 0; c < s.c(); ++c) {
          const LD z = (x.data()[ix(n, c, y, xx)] - mean) / std::sqrt(var + eps);
          o[ix(n, c, y, xx)] = static_cast<double>(z * gain.data()[static_cast<std::size_t>(c)] +
                                                   bias.data()[static_cast<std::size_t>(c)]);
        }
      }
    }
  }
  return make(s, o);
}

// ---- DQ-Shift -----------------------------------------------------------------------

Tensor fixed_qshift(const Tensor& x) {
  const Shape& s = x.shape();
  const Ix ix(s);
  const int per = s.c() / kShiftGroups;
  std::vector<double> o(static_cast<std::size_t>(x.numel()));
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      const auto& off = kFixedOffsets[static_cast<std::size_t>(c / per)];
      for (int y = 0; y < s.h(); ++y) {
        for (int xx = 0; xx < s.w(); ++xx) {
          const int sy = std::clamp(y + off[0], 0, s.h() - 1);
          const int sx = std::clamp(xx + off[1], 0, s.w() - 1);
          o[ix(n, c, y, xx)] = static_cast<double>(x.data()[ix(n, c, y, xx)]) + x.data()[ix(n, c, sy, sx)];
        }
      }
    }
  }
  return make(s, o);
}

Tensor dynamic_offsets(const Tensor& x, const DqOffsetNet& net) {
  const Tensor d = project(map(oracle::conv2d(x, net.dwconv.spec, net.dwconv.weight, net.dwconv.bias), gelu), net.offset_proj);
  if (net.mode == DqShiftMode::no_gate) return d;
  const Tensor a = map(project(x, net.gate_proj), sigmoid);
  return zip(d, a, [](double p, double q) { return p * q; });
}

Tensor dq_shift(const Tensor& x, const DqOffsetNet& net, const Tensor& mu) {
  const Shape& s = x.shape();
  std::vector<double> coords(static_cast<std::size_t>(s.n()) * kOffsetChannels * s.h() * s.w());
  const Shape cs{s.n(), kOffsetChannels, s.h(), s.w()};
  const Ix cx(cs);
  Tensor dp;
  if (net.mode != DqShiftMode::fixed_only) dp = oracle::dynamic_offsets(x, net);
  for (int n = 0; n < s.n(); ++n) {
    for (int g = 0; g < kShiftGroups; ++g) {
      const bool fixed = net.mode != DqShiftMode::dynamic_only;
      for (int y = 0; y < s.h(); ++y) {
        for (int xx = 0; xx < s.w(); ++xx) {
          double r = y + (fixed ? kFixedOffsets[static_cast<std::size_t>(g)][0] : 0);
          double q = xx + (fixed ? kFixedOffsets[static_cast<std::size_t>(g)][1] : 0);
          if (dp.defined()) {
            r += dp.data()[cx(n, 2 * g, y, xx)];
            q += dp.data()[cx(n, 2 * g + 1, y, xx)];
          }
          coords[cx(n, 2 * g, y, xx)] = r;
          coords[cx(n, 2 * g + 1, y, xx)] = q;
        }
      }
    }
  }
  const Tensor sampled = oracle::bilinear(x, make(cs, coords), kShiftGroups);
  const Tensor scaled = scale_channels(sampled, mu, 1.0);
  return zip(x, scaled, [](double p, double q) { return p + q; });
}

// ---- WKV ------------------------------------------------------------------------------

Tensor bi_wkv(const Tensor& k, const Tensor& v, const Tensor& w_raw, const Tensor& u) {
  const Shape& s = k.shape();
  const int len = s[s.rank() - 1];
  const int channels = static_cast<int>(w_raw.numel());
  const std::int64_t rows = k.numel() / len;
  std::vector<double> o(static_cast<std::size_t>(k.numel()));
  for (std::int64_t r = 0; r < rows; ++r) {
    const int c = static_cast<int>(r % channels);
    const LD w = std::exp(static_cast<LD>(w_raw.data()[static_cast<std::size_t>(c)])) / len;
    const LD bonus = u.data()[static_cast<std::size_t>(c)];
    const Real* kr = k.ptr() + r * len;
    const Real* vr = v.ptr() + r * len;
    for (int t = 0; t < len; ++t) {
      std::vector<LD> lw(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) {
        lw[static_cast<std::size_t>(i)] = i == t ? bonus + kr[i] : -(std::abs(t - i) - 1) * w + kr[i];
      }
      const LD m = *std::max_element(lw.begin(), lw.end());
      LD num = 0;
      LD den = 0;
      for (int i = 0; i < len; ++i) {
        const LD e = std::exp(lw[static_cast<std::size_t>(i)] - m);
        num += e * vr[i];
        den += e;
      }
      o[static_cast<std::size_t>(r * len + t)] = static_cast<double>(num / den);
    }
  }
  return make(s, o);
}

// ---- Mixes ------------------------------------------------------------------------------

Tensor channel_mix(const Tensor& x, const ChannelMixParams& p) {
  const Tensor xr = oracle::dq_shift(x, p.dq, p.mu_r);
  const Tensor xk = oracle::dq_shift(x, p.dq, p.mu_k);
  const Shape& s = x.shape();
  const int c = s.c();
  const int hidden = p.value.spec.out_ch;
  const Ix ix(s);
  std::vector<double> o(static_cast<std::size_t>(x.numel()));
  const auto& rw = p.r_proj.weight.data();
  const auto& kw = p.k_proj.weight.data();
  for (int n = 0; n < s.n(); ++n) {
    for (int y = 0; y < s.h(); ++y) {
      for (int xx = 0; xx < s.w(); ++xx) {
        std::vector<LD> gated(static_cast<std::size_t>(c));
        for (int oc = 0; oc < c; ++oc) {
          LD r = p.r_proj.bias.data()[static_cast<std::size_t>(oc)];
          LD kv = p.k_proj.bias.data()[static_cast<std::size_t>(oc)];
          for (int ic = 0; ic < c; ++ic) {
            r += static_cast<LD>(rw[static_cast<std::size_t>(oc * c + ic)]) * xr.data()[ix(n, ic, y, xx)];
            kv += static_cast<LD>(kw[static_cast<std::size_t>(oc * c + ic)]) * xk.data()[ix(n, ic, y, xx)];
          }
          const LD relu = std::max<LD>(kv, 0);
          gated[static_cast<std::size_t>(oc)] = relu * relu / (1 + std::exp(-r));
        }
        std::vector<LD> hid(static_cast<std::size_t>(hidden), 0);
        for (int j = 0; j < hidden; ++j) {
          for (int ic = 0; ic < c; ++ic) {
            hid[static_cast<std::size_t>(j)] +=
                p.value.weight.data()[static_cast<std::size_t>(j * c + ic)] * gated[static_cast<std::size_t>(ic)];
          }
        }
        for (int oc = 0; oc < c; ++oc) {
          LD acc = 0;
          for (int j = 0; j < hidden; ++j) {
            acc += p.output.weight.data()[static_cast<std::size_t>(oc * hidden + j)] * hid[static_cast<std::size_t>(j)];
          }
          o[ix(n, oc, y, xx)] = static_cast<double>(acc);
        }
      }
    }
  }
  return make(s, o);
}

Tensor fourier_mix(const Tensor& x, const FourierMixParams& p) {
  const BlockOptions& opt = p.options;
  const bool use_rs = opt.gating != GatingMode::fourier_only;
  const bool use_rfft = opt.gating != GatingMode::spatial_only;
  const Shape& s = x.shape();
  const int c = s.c();
  const int h = s.h();
  const int wf = s.w() / 2 + 1;
  const int len = h * wf;

  // Projections of the shifted inputs.
  Tensor r_s;
  if (use_rs) r_s = project(oracle::dq_shift(x, p.dq, p.mu_r), p.r_proj);
  const Tensor k_s = project(oracle::dq_shift(x, p.dq, p.mu_k), p.k_proj);
  const Tensor v_s = project(oracle::dq_shift(x, p.dq, p.mu_v), p.v_proj);

  // Spectra packed as real planes over imaginary planes, then sequenced.
  const std::vector<int> perm = opt.seq_order == SeqOrder::distance ? oracle::ordering(h, wf) : [&] {
    std::vector<int> id(static_cast<std::size_t>(len));
    std::iota(id.begin(), id.end(), 0);
    return id;
  }();
  auto sequence = [&](const Tensor& spatial, double factor) {
    const auto [re, im] = oracle::dft2(spatial);
    std::vector<double> sq(static_cast<std::size_t>(s.n()) * 2 * c * len);
    for (int n = 0; n < s.n(); ++n) {
      for (int ch = 0; ch < 2 * c; ++ch) {
        const Tensor& part = ch < c ? re : im;
        const int src = ch % c;
        for (int t = 0; t < len; ++t) {
          sq[(static_cast<std::size_t>(n) * 2 * c + ch) * len + t] =
              factor * part.data()[(static_cast<std::size_t>(n) * c + src) * len + perm[static_cast<std::size_t>(t)]];
        }
      }
    }
    return make(Shape{s.n(), 2 * c, 1, len}, sq);
  };
  const Tensor k_fft = sequence(k_s, 1.0 / (static_cast<double>(h) * s.w()));
  const Tensor v_fft = sequence(v_s, 1.0);
  Tensor wkv = opt.bypass_wkv ? v_fft : oracle::bi_wkv(k_fft, v_fft, p.wkv.w_raw, p.wkv.u);
  if (use_rfft) {
    const Tensor gate = map(project(v_fft, p.rfft_gate), sigmoid);
    wkv = zip(gate, wkv, [](double a, double b) { return a * b; });
  }

  // Back to the grid and the spatial domain.
  std::vector<double> re(static_cast<std::size_t>(s.n()) * c * len);
  std::vector<double> im(re.size());
  for (int n = 0; n < s.n(); ++n) {
    for (int ch = 0; ch < 2 * c; ++ch) {
      std::vector<double>& dst = ch < c ? re : im;
      for (int t = 0; t < len; ++t) {
        dst[(static_cast<std::size_t>(n) * c + ch % c) * len + perm[static_cast<std::size_t>(t)]] =
            wkv.data()[(static_cast<std::size_t>(n) * 2 * c + ch) * len + t];
      }
    }
  }
  const Shape half{s.n(), c, h, wf};
  Tensor o_fft = oracle::idft2(make(half, re), make(half, im), s.w());
  if (use_rs) {
    const Tensor gate = opt.sigmoid_spatial_gate ? map(r_s, sigmoid) : r_s;
    o_fft = zip(gate, o_fft, [](double a, double b) { return a * b; });
  }
  return project(o_fft, p.out_proj);
}

// ---- SBM -------------------------------------------------------------------------------

Tensor similarity(const Tensor& x_e, const Tensor& x_d) {
  const Shape& s = x_e.shape();
  const Ix ix(s);
  const int c = s.c();
  std::vector<double> o(static_cast<std::size_t>(s.n()) * c * c);
  for (int n = 0; n < s.n(); ++n) {
    std::vector<LD> ze(static_cast<std::size_t>(c), 0);
    std::vector<LD> zd(static_cast<std::size_t>(c), 0);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < s.h(); ++y) {
        for (int xx = 0; xx < s.w(); ++xx) {
          ze[static_cast<std::size_t>(ch)] += x_e.data()[ix(n, ch, y, xx)];
          zd[static_cast<std::size_t>(ch)] += x_d.data()[ix(n, ch, y, xx)];
        }
      }
      ze[static_cast<std::size_t>(ch)] /= static_cast<LD>(s.h()) * s.w();
      zd[static_cast<std::size_t>(ch)] /= static_cast<LD>(s.h()) * s.w();
    }
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) {
        o[(static_cast<std::size_t>(n) * c + i) * c + j] =
            static_cast<double>(ze[static_cast<std::size_t>(i)] * zd[static_cast<std::size_t>(j)]);
      }
    }
  }
  return make(Shape{s.n(), c, c}, o);
}

Tensor dynamic_kernels(const Tensor& sim, const Tensor& weight, const Tensor& bias) {
  const int n = sim.shape()[0];
  const int c = sim.shape()[1];
  const int kk = weight.shape()[0];
  std::vector<double> o(static_cast<std::size_t>(n) * c * kk);
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < c; ++i) {
      std::vector<LD> logits(static_cast<std::size_t>(kk));
      for (int e = 0; e < kk; ++e) {
        LD acc = bias.data()[static_cast<std::size_t>(e)];
        for (int j = 0; j < c; ++j) {
          acc += static_cast<LD>(weight.data()[static_cast<std::size_t>(e * c + j)]) *
                 sim.data()[(static_cast<std::size_t>(b) * c + i) * c + j];
        }
        logits[static_cast<std::size_t>(e)] = acc;
      }
      const LD m = *std::max_element(logits.begin(), logits.end());
      LD total = 0;
      for (LD& l : logits) total += (l = std::exp(l - m));
      for (int e = 0; e < kk; ++e) {
        o[(static_cast<std::size_t>(b) * c + i) * kk + e] = static_cast<double>(logits[static_cast<std::size_t>(e)] / total);
      }
    }
  }
  return make(Shape{n, c, kk}, o);
}

Tensor dynamic_conv(const Tensor& x, const Tensor& kernels, int k) {
  const Shape& s = x.shape();
  const Ix ix(s);
  const int pad = k / 2;
  std::vector<double> o(static_cast<std::size_t>(x.numel()));
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      const Real* ker = kernels.ptr() + (static_cast<std::int64_t>(n) * s.c() + c) * k * k;
      for (int y = 0; y < s.h(); ++y) {
        for (int xx = 0; xx < s.w(); ++xx) {
          LD acc = 0;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int sy = std::clamp(y + ky - pad, 0, s.h() - 1);
              const int sx = std::clamp(xx + kx - pad, 0, s.w() - 1);
              acc += static_cast<LD>(ker[ky * k + kx]) * x.data()[ix(n, c, sy, sx)];
            }
          }
          o[ix(n, c, y, xx)] = static_cast<double>(acc);
        }
      }
    }
  }
  return make(s, o);
}

Tensor ksfu(const Tensor& x3, const Tensor& x5, const Tensor& x7, const SbmParams& p) {
  const Shape& s = x3.shape();
  const int c = s.c();
  std::vector<double> cat(static_cast<std::size_t>(x3.numel()) * 3);
  const Tensor* xs[] = {&x3, &x5, &x7};
  for (int n = 0; n < s.n(); ++n) {
    for (int g = 0; g < 3; ++g) {
      const std::size_t plane = static_cast<std::size_t>(c) * s.h() * s.w();
      std::copy_n(xs[g]->ptr() + n * plane, plane, cat.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(n) * 3 + g) * plane));
    }
  }
  const Tensor logits = project(oracle::conv2d(make(Shape{s.n(), 3 * c, s.h(), s.w()}, cat), p.ksfu_dwconv.spec,
                                       p.ksfu_dwconv.weight, p.ksfu_dwconv.bias),
                                p.ksfu_proj);
  const Ix ix(s);
  const Ix lx(logits.shape());
  std::vector<double> o(static_cast<std::size_t>(x3.numel()));
  for (int n = 0; n < s.n(); ++n) {
    for (int y = 0; y < s.h(); ++y) {
      for (int xx = 0; xx < s.w(); ++xx) {
        LD l[3];
        for (int g = 0; g < 3; ++g) l[g] = logits.data()[lx(n, g, y, xx)];
        const LD m = std::max({l[0], l[1], l[2]});
        LD total = 0;
        for (LD& v : l) total += (v = std::exp(v - m));
        for (int ch = 0; ch < c; ++ch) {
          LD acc = 0;
          for (int g = 0; g < 3; ++g) acc += l[g] / total * xs[g]->data()[ix(n, ch, y, xx)];
          o[ix(n, ch, y, xx)] = static_cast<double>(acc);
        }
      }
    }
  }
  return make(s, o);
}

Tensor sbm_forward(const Tensor& x_e, const Tensor& x_d, const SbmParams& p) {
  const Shape& s = x_e.shape();
  const int c = s.c();
  std::array<Tensor, 3> scaled;
  for (int i = 0; i < 3; ++i) {
    if (!p.has_scale(i)) continue;
    const int k = kSbmScales[static_cast<std::size_t>(i)];
    Tensor ker;
    if (p.mode == SbmMode::random_kernels) {
      const Tensor& lg = p.fixed_logits[static_cast<std::size_t>(i)];
      std::vector<double> tiled;
      for (int n = 0; n < s.n(); ++n) {
        for (int ch = 0; ch < c; ++ch) {
          LD m = -INFINITY;
          for (int e = 0; e < k * k; ++e) m = std::max<LD>(m, lg.data()[static_cast<std::size_t>(ch * k * k + e)]);
          LD total = 0;
          for (int e = 0; e < k * k; ++e) total += std::exp(lg.data()[static_cast<std::size_t>(ch * k * k + e)] - m);
          for (int e = 0; e < k * k; ++e) {
            tiled.push_back(static_cast<double>(std::exp(lg.data()[static_cast<std::size_t>(ch * k * k + e)] - m) / total));
          }
        }
      }
      ker = make(Shape{s.n(), c, k * k}, tiled);
    } else {
      ker = oracle::dynamic_kernels(oracle::similarity(x_e, x_d), p.kernel_weight[static_cast<std::size_t>(i)],
                            p.kernel_bias[static_cast<std::size_t>(i)]);
    }
    scaled[static_cast<std::size_t>(i)] = oracle::dynamic_conv(x_e, ker, k);
  }
  Tensor sem;
  if (p.mode == SbmMode::single_scale) {
    sem = scaled[1];
  } else if (p.mode == SbmMode::sum_fusion) {
    sem = zip(zip(scaled[0], scaled[1], [](double a, double b) { return a + b; }), scaled[2],
              [](double a, double b) { return a + b; });
  } else {
    sem = oracle::ksfu(scaled[0], scaled[1], scaled[2], p);
  }
  // x_e - alpha * GAP(x_e) + beta * X_sem, then the fusion projection.
  const Ix ix(s);
  std::vector<double> cat(static_cast<std::size_t>(x_e.numel()) * 2);
  const Shape cs{s.n(), 2 * c, s.h(), s.w()};
  const Ix cx(cs);
  for (int n = 0; n < s.n(); ++n) {
    for (int ch = 0; ch < c; ++ch) {
      LD mean = 0;
      for (int y = 0; y < s.h(); ++y)
        for (int xx = 0; xx < s.w(); ++xx) mean += x_e.data()[ix(n, ch, y, xx)];
      mean /= static_cast<LD>(s.h()) * s.w();
      const LD alpha = p.mode == SbmMode::additive ? 0 : p.alpha.data()[static_cast<std::size_t>(ch)];
      const LD beta = p.beta.data()[static_cast<std::size_t>(ch)];
      for (int y = 0; y < s.h(); ++y) {
        for (int xx = 0; xx < s.w(); ++xx) {
          cat[cx(n, ch, y, xx)] =
              static_cast<double>(x_e.data()[ix(n, ch, y, xx)] - alpha * mean + beta * sem.data()[ix(n, ch, y, xx)]);
          cat[cx(n, c + ch, y, xx)] = x_d.data()[ix(n, ch, y, xx)];
        }
      }
    }
  }
  return project(make(cs, cat), p.fuse_proj);
}

}  // namespace oracle
FRWKV_END_NAMESPACE
