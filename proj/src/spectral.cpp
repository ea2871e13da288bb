#include "frwkv/spectral.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "frwkv/kernels.hpp"
#include "frwkv/ops.hpp"

FRWKV_BEGIN_NAMESPACE

namespace {

// Multiplicity of column v in the Hermitian-completed spectrum.
Real column_weight(int v, int width) {
  if (v == 0) return Real(1);
  if (width % 2 == 0 && v == width / 2) return Real(1);
  return Real(2);
}

// Forward transform of every sample's C planes into [re planes | im planes].
void forward_packed(int n, int c, int h, int w, const Real* x, Real* out) {
  const int wf = half_width(w);
  const std::int64_t in_sample = static_cast<std::int64_t>(c) * h * w;
  const std::int64_t block = static_cast<std::int64_t>(c) * h * wf;
  for (int b = 0; b < n; ++b) {
    Real* re = out + b * 2 * block;
    kernels::rfft2_planes(c, h, w, {x + b * in_sample, static_cast<std::size_t>(in_sample)},
                          {re, static_cast<std::size_t>(block)}, {re + block, static_cast<std::size_t>(block)});
  }
}

void inverse_packed(int n, int c, int h, int w, const Real* packed, Real* x) {
  const int wf = half_width(w);
  const std::int64_t out_sample = static_cast<std::int64_t>(c) * h * w;
  const std::int64_t block = static_cast<std::int64_t>(c) * h * wf;
  for (int b = 0; b < n; ++b) {
    const Real* re = packed + b * 2 * block;
    kernels::irfft2_planes(c, h, w, {re, static_cast<std::size_t>(block)}, {re + block, static_cast<std::size_t>(block)},
                           {x + b * out_sample, static_cast<std::size_t>(out_sample)});
  }
}

}  // namespace

Tensor rfft2_packed(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("rfft2: expected N,C,H,W tensor, got " + x.shape().str());
  const Shape& s = x.shape();
  const int wf = half_width(s.w());
  const Shape out_shape{s.n(), 2 * s.c(), s.h(), wf};
  std::vector<Real> out(static_cast<std::size_t>(out_shape.numel()));
  forward_packed(s.n(), s.c(), s.h(), s.w(), x.ptr(), out.data());
  Tensor result = Tensor::from_data(out_shape, std::move(out));
  if (autograd::should_record({&x})) {
    autograd::record("rfft2", result, {&x}, [xi = x.impl(), s, wf](std::span<const Real> g) {
      // Adjoint: H*W * irfft2(G / column_weight).
      std::vector<Real> scaled(g.begin(), g.end());
      const std::int64_t rows = static_cast<std::int64_t>(s.n()) * 2 * s.c() * s.h();
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int v = 0; v < wf; ++v) scaled[static_cast<std::size_t>(r * wf + v)] /= column_weight(v, s.w());
      }
      std::vector<Real> dx(static_cast<std::size_t>(s.numel()));
      inverse_packed(s.n(), s.c(), s.h(), s.w(), scaled.data(), dx.data());
      const Real hw = static_cast<Real>(s.h()) * static_cast<Real>(s.w());
      auto gx = xi->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += hw * dx[i];
    });
  }
  return result;
}

Tensor irfft2_packed(const Tensor& packed, int src_width) {
  if (packed.rank() != 4 || packed.shape().c() % 2 != 0) {
    throw std::invalid_argument("irfft2: expected N,2C,H,Wf tensor, got " + packed.shape().str());
  }
  const Shape& s = packed.shape();
  if (src_width < 1 || half_width(src_width) != s.w()) {
    throw std::invalid_argument("irfft2: source width " + std::to_string(src_width) + " inconsistent with spectrum " +
                                s.str());
  }
  const int c = s.c() / 2;
  const Shape out_shape{s.n(), c, s.h(), src_width};
  std::vector<Real> out(static_cast<std::size_t>(out_shape.numel()));
  inverse_packed(s.n(), c, s.h(), src_width, packed.ptr(), out.data());
  Tensor result = Tensor::from_data(out_shape, std::move(out));
  if (autograd::should_record({&packed})) {
    autograd::record("irfft2", result, {&packed}, [pi = packed.impl(), s, c, src_width](std::span<const Real> g) {
      // Adjoint: column_weight / (H*W) * rfft2(g).
      std::vector<Real> spec(static_cast<std::size_t>(s.numel()));
      forward_packed(s.n(), c, s.h(), src_width, g.data(), spec.data());
      const Real inv_hw = Real(1) / (static_cast<Real>(s.h()) * static_cast<Real>(src_width));
      const int wf = s.w();
      const std::int64_t rows = static_cast<std::int64_t>(s.n()) * s.c() * s.h();
      auto gp = pi->grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int v = 0; v < wf; ++v) {
          const std::size_t i = static_cast<std::size_t>(r * wf + v);
          gp[i] += spec[i] * column_weight(v, src_width) * inv_hw;
        }
      }
    });
  }
  return result;
}

ComplexSpectrum rfft2(const Tensor& x) { return icir(rfft2_packed(x), x.shape().w()); }

Tensor irfft2(const ComplexSpectrum& s) { return irfft2_packed(cir(s), s.src_width); }

Tensor cir(const ComplexSpectrum& s) {
  if (s.re.shape() != s.im.shape()) throw std::invalid_argument("cir: real and imaginary shapes differ");
  const Tensor parts[] = {s.re, s.im};
  return concat_channels(parts);
}

ComplexSpectrum icir(const Tensor& packed, int src_width) {
  if (packed.rank() < 2 || packed.shape()[1] % 2 != 0) {
    throw std::invalid_argument("icir: channel count must be even, got " + packed.shape().str());
  }
  const int c = packed.shape()[1] / 2;
  return {slice_channels(packed, 0, c), slice_channels(packed, c, c), src_width};
}

// ---- Orderings --------------------------------------------------------------

namespace {

SpectralOrdering finish(int height, int width_f, std::vector<int> perm) {
  SpectralOrdering ord;
  ord.height = height;
  ord.width = width_f;
  ord.inv_perm.assign(perm.size(), 0);
  for (std::size_t t = 0; t < perm.size(); ++t) ord.inv_perm[static_cast<std::size_t>(perm[t])] = static_cast<int>(t);
  ord.perm = std::move(perm);
  return ord;
}

void check_grid(int height, int width_f) {
  if (height < 1 || width_f < 1) throw std::invalid_argument("ordering: grid extents must be >= 1");
}

}  // namespace

SpectralOrdering build_ordering(int height, int width_f) {
  check_grid(height, width_f);
  const int t = height * width_f;
  std::vector<std::int64_t> dist2(static_cast<std::size_t>(t));
  for (int h = 0; h < height; ++h) {
    const std::int64_t fh = std::min(h, height - h);
    for (int w = 0; w < width_f; ++w) dist2[static_cast<std::size_t>(h * width_f + w)] = fh * fh + static_cast<std::int64_t>(w) * w;
  }
  std::vector<int> perm(static_cast<std::size_t>(t));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return dist2[static_cast<std::size_t>(a)] < dist2[static_cast<std::size_t>(b)]; });
  return finish(height, width_f, std::move(perm));
}

SpectralOrdering build_row_major_ordering(int height, int width_f) {
  check_grid(height, width_f);
  std::vector<int> perm(static_cast<std::size_t>(height * width_f));
  std::iota(perm.begin(), perm.end(), 0);
  return finish(height, width_f, std::move(perm));
}

std::shared_ptr<const SpectralOrdering> cached_ordering(SeqOrder order, int height, int width_f) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::shared_ptr<const SpectralOrdering>> cache;
  const auto key = std::make_tuple(static_cast<int>(order), height, width_f);
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto ord = std::make_shared<const SpectralOrdering>(order == SeqOrder::distance ? build_ordering(height, width_f)
                                                                                   : build_row_major_ordering(height, width_f));
  cache.emplace(key, ord);
  return ord;
}

namespace {

// out[(n,c), j] = x[(n,c), index[j]]; backward scatters.
Tensor gather_rows(const char* name, const Tensor& x, const Shape& out_shape, const std::vector<int>& index,
                   std::int64_t rows, int in_len) {
  const int out_len = static_cast<int>(index.size());
  std::vector<Real> out(static_cast<std::size_t>(rows * out_len));
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* src = x.ptr() + r * in_len;
    Real* dst = out.data() + r * out_len;
    for (int j = 0; j < out_len; ++j) dst[j] = src[index[static_cast<std::size_t>(j)]];
  }
  Tensor result = Tensor::from_data(out_shape, std::move(out));
  if (autograd::should_record({&x})) {
    autograd::record(name, result, {&x}, [xi = x.impl(), index, rows, in_len, out_len](std::span<const Real> g) {
      auto gx = xi->grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        Real* dst = gx.data() + r * in_len;
        const Real* src = g.data() + r * out_len;
        for (int j = 0; j < out_len; ++j) dst[index[static_cast<std::size_t>(j)]] += src[j];
      }
    });
  }
  return result;
}

}  // namespace

Tensor seq(const Tensor& x, const SpectralOrdering& ord) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s.h() != ord.height || s.w() != ord.width) {
    throw std::invalid_argument("seq: grid " + s.str() + " does not match ordering " + std::to_string(ord.height) + "x" +
                                std::to_string(ord.width));
  }
  return gather_rows("seq", x, Shape{s.n(), s.c(), 1, ord.length()}, ord.perm,
                     static_cast<std::int64_t>(s.n()) * s.c(), ord.length());
}

Tensor iseq(const Tensor& sq, const SpectralOrdering& ord) {
  const Shape& s = sq.shape();
  if (s.rank() != 4 || s.h() != 1 || s.w() != ord.length()) {
    throw std::invalid_argument("iseq: sequence " + s.str() + " does not match ordering length " +
                                std::to_string(ord.length()));
  }
  return gather_rows("iseq", sq, Shape{s.n(), s.c(), ord.height, ord.width}, ord.inv_perm,
                     static_cast<std::int64_t>(s.n()) * s.c(), ord.length());
}

FRWKV_END_NAMESPACE
