#pragma once

// Raw numeric kernels behind the differentiable ops. Everything here works on
// contiguous NCHW buffers. The functions in `kernels` are OpenMP-parallel over
// independent outputs (planes, channels); every output element is produced by
// exactly one thread in a fixed order, so results do not depend on the thread
// count. `kernels::serial` holds straightforward single-threaded references
// used by the tests and the benchmark.

#include <complex>
#include <cstdint>
#include <span>

#include "frwkv/config.hpp"

FRWKV_BEGIN_NAMESPACE

enum class Padding { replicate, zero };

namespace kernels {

struct ConvGeometry {
  int batch = 1;
  int in_ch = 1;
  int out_ch = 1;
  int height = 1;
  int width = 1;
  int kernel = 1;
  int stride = 1;
  bool depthwise = false;
  Padding padding = Padding::replicate;

  int out_height() const { return (height + stride - 1) / stride; }
  int out_width() const { return (width + stride - 1) / stride; }
  int pad() const { return kernel / 2; }
  std::int64_t macs() const;
};

/// out = conv(x, weight) + bias. Weight layout (out, in, k, k) or (C, 1, k, k)
/// when depthwise. `bias` may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> out);

/// Accumulates into dx / dweight / dbias (any may be empty to skip).
void conv2d_backward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                     std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dweight,
                     std::span<Real> dbias);

/// Depthwise convolution with a distinct k x k kernel per (n, c); stride 1.
/// kernels layout: (N, C, k*k).
void dynamic_depthwise_forward(int batch, int channels, int height, int width, int k, Padding padding,
                               std::span<const Real> x, std::span<const Real> kernels, std::span<Real> out);
void dynamic_depthwise_backward(int batch, int channels, int height, int width, int k, Padding padding,
                                std::span<const Real> x, std::span<const Real> kernels,
                                std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dkernels);

struct SampleGeometry {
  int batch = 1;
  int channels = 1;
  int height = 1;
  int width = 1;
  int groups = 1;  // coordinate pairs; channel group g reads coords (2g, 2g+1)
};

/// Bilinear sampling at absolute (row, col) coordinates, clamped to the image.
void bilinear_forward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                      std::span<Real> out);
void bilinear_backward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                       std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dcoords);

/// Layer norm over the channel axis at each (n, h, w). Saves per-location mean
/// and reciprocal std for the backward pass.
void layer_norm_forward(int batch, int channels, int spatial, Real eps, std::span<const Real> x,
                        std::span<const Real> gain, std::span<const Real> bias, std::span<Real> out,
                        std::span<Real> mean, std::span<Real> rstd);
void layer_norm_backward(int batch, int channels, int spatial, std::span<const Real> x,
                         std::span<const Real> gain, std::span<const Real> mean, std::span<const Real> rstd,
                         std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dgain,
                         std::span<Real> dbias);

// ---- FFT ------------------------------------------------------------------

using Complex = std::complex<Real>;

/// In-place complex DFT of arbitrary length (radix-2 for powers of two,
/// Bluestein otherwise). Unnormalized in both directions.
void fft(std::span<Complex> data, bool inverse);

/// Real 2D FFT of `planes` H x W planes into half-plane spectra packed as
/// (re planes, im planes) of H x (W/2+1) each.
void rfft2_planes(int planes, int height, int width, std::span<const Real> x, std::span<Real> re,
                  std::span<Real> im);
/// Inverse of rfft2_planes including the 1/(H*W) factor. Imaginary parts of
/// the self-conjugate columns (v = 0 and, for even W, v = W/2) are ignored.
void irfft2_planes(int planes, int height, int width, std::span<const Real> re, std::span<const Real> im,
                   std::span<Real> x);

// ---- Bidirectional WKV ----------------------------------------------------

struct WkvGeometry {
  int batch = 1;
  int channels = 1;
  int length = 1;
};

/// Linear-time bidirectional WKV. `w_raw` maps to decay exp(w_raw); `log_den`
/// (optional, same size as out) receives log of the normalizer per token.
void wkv_forward(const WkvGeometry& g, std::span<const Real> k, std::span<const Real> v,
                 std::span<const Real> w_raw, std::span<const Real> u, std::span<Real> out,
                 std::span<Real> log_den);
/// Accumulates gradients for k, v, w_raw and u.
void wkv_backward(const WkvGeometry& g, std::span<const Real> k, std::span<const Real> v,
                  std::span<const Real> w_raw, std::span<const Real> u, std::span<const Real> out,
                  std::span<const Real> log_den, std::span<const Real> grad_out, std::span<Real> dk,
                  std::span<Real> dv, std::span<Real> dw_raw, std::span<Real> du);

// ---- Instrumentation --------------------------------------------------------

/// Global multiply-accumulate counter fed by the kernels while enabled.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::int64_t total() const;
};
void count_macs(std::int64_t n);

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> out);
void conv2d_backward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> weight,
                     std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dweight,
                     std::span<Real> dbias);
void bilinear_forward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                      std::span<Real> out);
void bilinear_backward(const SampleGeometry& g, std::span<const Real> x, std::span<const Real> coords,
                       std::span<const Real> grad_out, std::span<Real> dx, std::span<Real> dcoords);
void rfft2_planes(int planes, int height, int width, std::span<const Real> x, std::span<Real> re,
                  std::span<Real> im);
void wkv_forward(const WkvGeometry& g, std::span<const Real> k, std::span<const Real> v,
                 std::span<const Real> w_raw, std::span<const Real> u, std::span<Real> out);

}  // namespace serial
}  // namespace kernels

FRWKV_END_NAMESPACE
