#pragma once

#include <memory>
#include <vector>

#include "frwkv/tensor.hpp"

FRWKV_BEGIN_NAMESPACE

/// One-sided width of a real FFT along an axis of extent w.
constexpr int half_width(int w) { return w / 2 + 1; }

/// Half-plane spectrum of a real N,C,H,W tensor: re and im are N,C,H,W/2+1.
struct ComplexSpectrum {
  Tensor re;
  Tensor im;
  int src_width = 0;
};

/// Unnormalized forward DFT over the last two axes, keeping columns [0, W/2].
ComplexSpectrum rfft2(const Tensor& x);
/// Inverse of rfft2 including the 1/(H*W) factor. The output is real by
/// construction: imaginary parts of self-conjugate bins are dropped.
Tensor irfft2(const ComplexSpectrum& s);

/// Stacks real planes over imaginary planes: N,2C,H,Wf.
Tensor cir(const ComplexSpectrum& s);
ComplexSpectrum icir(const Tensor& packed, int src_width);

/// Fused cir(rfft2(x)) and irfft2(icir(packed)).
Tensor rfft2_packed(const Tensor& x);
Tensor irfft2_packed(const Tensor& packed, int src_width);

enum class SeqOrder { distance, row_major };

/// Permutation between the H x Wf half-plane grid and a 1D token sequence.
/// perm[t] is the row-major grid index placed at sequence position t.
struct SpectralOrdering {
  int height = 0;
  int width = 0;  // half-plane width Wf
  std::vector<int> perm;
  std::vector<int> inv_perm;

  int length() const { return height * width; }
};

/// Sorts grid points by distance sqrt(min(h, H-h)^2 + w^2) from the DC bin,
/// ties broken by ascending row-major index.
SpectralOrdering build_ordering(int height, int width_f);
/// Identity permutation ("classic" row-major scan).
SpectralOrdering build_row_major_ordering(int height, int width_f);
/// Process-wide immutable cache keyed by (order, H, Wf).
std::shared_ptr<const SpectralOrdering> cached_ordering(SeqOrder order, int height, int width_f);

/// N,C,H,Wf grid -> N,C,1,T sequence, and back.
Tensor seq(const Tensor& x, const SpectralOrdering& ord);
Tensor iseq(const Tensor& s, const SpectralOrdering& ord);

FRWKV_END_NAMESPACE
