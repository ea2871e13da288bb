#pragma once

#include <array>
#include <string>

#include "frwkv/layers.hpp"

FRWKV_BEGIN_NAMESPACE

inline constexpr std::array<int, 3> kSbmScales{3, 5, 7};

enum class SbmMode {
  full,
  random_kernels,  // fixed random kernel logits instead of similarity-driven kernels
  single_scale,    // 5x5 kernels only, no scale fusion
  sum_fusion,      // scales summed instead of weighted by KSFU
  additive,        // x_e + beta * X_sem, without removing the DC component
};

struct SbmParams {
  std::array<Tensor, 3> kernel_weight;  // (k*k, C) per scale
  std::array<Tensor, 3> kernel_bias;    // (k*k)
  std::array<Tensor, 3> fixed_logits;   // (C, k*k), random_kernels mode only, not trainable
  ConvLayer ksfu_dwconv;                // depthwise 3x3 over 3C
  ConvLayer ksfu_proj;                  // 1x1, 3C -> 3
  Tensor alpha;                         // (C), 1 at init
  Tensor beta;                          // (C), 1 at init
  ConvLayer fuse_proj;                  // 1x1, 2C -> C
  SbmMode mode = SbmMode::full;
  int channels = 0;

  static SbmParams create(ParameterStore& store, const std::string& prefix, int channels, SbmMode mode);
  bool has_scale(int index) const { return mode != SbmMode::single_scale || index == 1; }
};

/// (N, C, C) outer products GAP(x_e) GAP(x_d)^T.
Tensor similarity(const Tensor& x_e, const Tensor& x_d);

/// Softmax(Linear(sim)) over the k*k kernel entries: (N, C, k*k).
Tensor dynamic_kernels(const Tensor& sim, const Tensor& weight, const Tensor& bias);

/// Depthwise convolution of x_e with one dynamic k x k kernel per (n, c).
Tensor dsk_apply(const Tensor& x_e, const Tensor& kernels, int k);

/// Per-pixel scale weights (N, 3, H, W), softmax over the three scales.
Tensor ksfu_weights(const Tensor& x3, const Tensor& x5, const Tensor& x7, const SbmParams& p);
Tensor ksfu(const Tensor& x3, const Tensor& x5, const Tensor& x7, const SbmParams& p);

/// x_e - alpha * GAP(x_e) + beta * X_sem.
Tensor semantic_replace(const Tensor& x_e, const Tensor& x_sem, const SbmParams& p);
/// fuse_proj(concat(semantic_replace(x_e, X_sem), x_d)).
Tensor semantic_replace_and_fuse(const Tensor& x_e, const Tensor& x_d, const Tensor& x_sem, const SbmParams& p);

/// Kernels used for scale index s, honouring the mode.
Tensor sbm_kernels(const Tensor& x_e, const Tensor& x_d, int scale_index, const SbmParams& p);
/// Fused semantic feature X_sem.
Tensor sbm_semantic(const Tensor& x_e, const Tensor& x_d, const SbmParams& p);
Tensor sbm_forward(const Tensor& x_e, const Tensor& x_d, const SbmParams& p);

FRWKV_END_NAMESPACE
