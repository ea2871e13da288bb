#pragma once

// Shared building blocks for the parallel and serial kernel sets.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "frwkv/kernels.hpp"

FRWKV_BEGIN_NAMESPACE
namespace kernels::detail {

/// Splits output columns into [0, left_end) reading left of the input,
/// [left_end, interior_end) reading inside it, and the rest reading right of it,
/// for input column = ow * stride + offset.
struct PlaneWindow {
  PlaneWindow() = default;
  PlaneWindow(int in_w, int out_w, int stride, int offset);
  int lo = 0;
  int left_end = 0;
  int interior_end = 0;
};

void accumulate_plane(Real* out, const Real* in, int h, int w, int oh_count, int ow_count, int k, int stride,
                      Padding padding, const Real* kernel);
void scatter_plane(Real* dx, const Real* grad, int h, int w, int oh_count, int ow_count, int k, int stride,
                   Padding padding, const Real* kernel);
void correlate_plane(Real* dkernel, const Real* grad, const Real* in, int h, int w, int oh_count, int ow_count,
                     int k, int stride, Padding padding);

Real dot(const Real* a, const Real* b, std::int64_t n);
Real sum(const Real* a, std::int64_t n);

/// Bilinear interpolation taps for one (row, col) position with clamping.
struct BilinearTap {
  BilinearTap(Real row, Real col, int height, int width) {
    row_inside = row >= 0 && row <= static_cast<Real>(height - 1);
    col_inside = col >= 0 && col <= static_cast<Real>(width - 1);
    const Real r = std::clamp(row, Real(0), static_cast<Real>(height - 1));
    const Real c = std::clamp(col, Real(0), static_cast<Real>(width - 1));
    r0 = std::min(static_cast<int>(std::floor(r)), height - 1);
    c0 = std::min(static_cast<int>(std::floor(c)), width - 1);
    r1 = std::min(r0 + 1, height - 1);
    c1 = std::min(c0 + 1, width - 1);
    fr = r - static_cast<Real>(r0);
    fc = c - static_cast<Real>(c0);
  }

  Real sample(const Real* x, int width) const {
    const Real x00 = x[r0 * width + c0];
    const Real x01 = x[r0 * width + c1];
    const Real x10 = x[r1 * width + c0];
    const Real x11 = x[r1 * width + c1];
    return (Real(1) - fr) * ((Real(1) - fc) * x00 + fc * x01) + fr * ((Real(1) - fc) * x10 + fc * x11);
  }

  void scatter(Real* dx, int width, Real g) const {
    dx[r0 * width + c0] += g * (Real(1) - fr) * (Real(1) - fc);
    dx[r0 * width + c1] += g * (Real(1) - fr) * fc;
    dx[r1 * width + c0] += g * fr * (Real(1) - fc);
    dx[r1 * width + c1] += g * fr * fc;
  }

  Real d_row(const Real* x, int width) const {
    if (!row_inside) return 0;
    const Real x00 = x[r0 * width + c0];
    const Real x01 = x[r0 * width + c1];
    const Real x10 = x[r1 * width + c0];
    const Real x11 = x[r1 * width + c1];
    return (Real(1) - fc) * (x10 - x00) + fc * (x11 - x01);
  }

  Real d_col(const Real* x, int width) const {
    if (!col_inside) return 0;
    const Real x00 = x[r0 * width + c0];
    const Real x01 = x[r0 * width + c1];
    const Real x10 = x[r1 * width + c0];
    const Real x11 = x[r1 * width + c1];
    return (Real(1) - fr) * (x01 - x00) + fr * (x11 - x10);
  }

  int r0, r1, c0, c1;
  Real fr, fc;
  bool row_inside, col_inside;
};

void rfft2_plane(int height, int width, const Real* x, Real* re, Real* im);
void irfft2_plane(int height, int width, const Real* re, const Real* im, Real* x);

void wkv_row_forward(int length, Real decay, Real bonus, const Real* k, const Real* v, Real* out, Real* log_den);
void wkv_row_backward(int length, Real decay, Real bonus, const Real* k, const Real* v, const Real* out,
                      const Real* log_den, const Real* grad, Real* dk, Real* dv, Real& ddecay, Real& dbonus);

}  // namespace kernels::detail
FRWKV_END_NAMESPACE
