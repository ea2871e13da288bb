#include "frwkv/wkv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "frwkv/kernels.hpp"

FRWKV_BEGIN_NAMESPACE

WkvParams WkvParams::create(ParameterStore& store, const std::string& prefix, int channels) {
  return {store.add(prefix + ".w_raw", Shape{channels}, Init::zeros()),
          store.add(prefix + ".u", Shape{channels}, Init::zeros())};
}

namespace {

kernels::WkvGeometry geometry(const Tensor& k, const Tensor& v, const WkvParams& p) {
  if (!k.defined() || !v.defined() || k.shape() != v.shape()) {
    throw std::invalid_argument("bi_wkv: k and v must have the same shape");
  }
  const Shape& s = k.shape();
  kernels::WkvGeometry g;
  if (s.rank() == 2) {
    g = {1, s[0], s[1]};
  } else if (s.rank() == 4 && s.h() == 1) {
    g = {s.n(), s.c(), s.w()};
  } else {
    throw std::invalid_argument("bi_wkv: expected (C,T) or (N,C,1,T), got " + s.str());
  }
  if (p.w_raw.numel() != g.channels || p.u.numel() != g.channels) {
    throw std::invalid_argument("bi_wkv: parameter width does not match " + std::to_string(g.channels) +
                                " channels");
  }
  return g;
}

}  // namespace

Tensor bi_wkv_scan(const Tensor& k, const Tensor& v, const WkvParams& p) {
  const kernels::WkvGeometry g = geometry(k, v, p);
  std::vector<Real> out(static_cast<std::size_t>(k.numel()));
  const bool track = autograd::should_record({&k, &v, &p.w_raw, &p.u});
  std::vector<Real> log_den(track ? out.size() : 0);
  kernels::wkv_forward(g, k.data(), v.data(), p.w_raw.data(), p.u.data(), out, log_den);
  Tensor result = Tensor::from_data(k.shape(), std::move(out));
  if (track) {
    autograd::record("bi_wkv", result, {&k, &v, &p.w_raw, &p.u},
                     [g, ki = k.impl(), vi = v.impl(), wi = p.w_raw.impl(), ui = p.u.impl(),
                      oi = std::weak_ptr<TensorImpl>(result.impl()), log_den = std::move(log_den)](
                         std::span<const Real> grad) {
                       const auto o = oi.lock();
                       auto span_or_empty = [](const std::shared_ptr<TensorImpl>& t) {
                         return t->requires_grad ? t->grad_buffer() : std::span<Real>{};
                       };
                       kernels::wkv_backward(g, ki->data, vi->data, wi->data, ui->data, o->data, log_den, grad,
                                             span_or_empty(ki), span_or_empty(vi), span_or_empty(wi),
                                             span_or_empty(ui));
                     });
  }
  return result;
}

Tensor bi_wkv_oracle(const Tensor& k, const Tensor& v, const WkvParams& p) {
  const kernels::WkvGeometry g = geometry(k, v, p);
  const int len = g.length;
  std::vector<Real> out(static_cast<std::size_t>(k.numel()));
  std::vector<double> logw(static_cast<std::size_t>(len));
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < g.channels; ++c) {
      const double w = std::exp(static_cast<double>(p.w_raw.data()[static_cast<std::size_t>(c)])) / len;
      const double u = p.u.data()[static_cast<std::size_t>(c)];
      const std::size_t off = (static_cast<std::size_t>(n) * g.channels + c) * len;
      const Real* kr = k.ptr() + off;
      const Real* vr = v.ptr() + off;
      for (int t = 0; t < len; ++t) {
        double m = -INFINITY;
        for (int i = 0; i < len; ++i) {
          const double lw = i == t ? u + kr[i] : -(std::abs(t - i) - 1) * w + kr[i];
          logw[static_cast<std::size_t>(i)] = lw;
          m = std::max(m, lw);
        }
        double num = 0;
        double den = 0;
        for (int i = 0; i < len; ++i) {
          const double e = std::exp(logw[static_cast<std::size_t>(i)] - m);
          num += e * vr[i];
          den += e;
        }
        out[off + static_cast<std::size_t>(t)] = static_cast<Real>(num / den);
      }
    }
  }
  return Tensor::from_data(k.shape(), std::move(out));
}

FRWKV_END_NAMESPACE
