#pragma once

#include <string>

#include "frwkv/dq_shift.hpp"
#include "frwkv/layers.hpp"
#include "frwkv/spectral.hpp"
#include "frwkv/wkv.hpp"

FRWKV_BEGIN_NAMESPACE

enum class GatingMode {
  dual,          // spatial gate R_s and Fourier gate sigmoid(R_fft)
  spatial_only,  // R_fft fixed to pass-through
  fourier_only,  // R_s fixed to 1
};

struct BlockOptions {
  DqShiftMode dq_mode = DqShiftMode::full;
  GatingMode gating = GatingMode::dual;
  SeqOrder seq_order = SeqOrder::distance;
  bool sigmoid_spatial_gate = false;
  /// Replaces Bi-WKV by the identity on V_fft. Diagnostic only.
  bool bypass_wkv = false;
  int gamma = 4;
};

struct FourierMixParams {
  DqOffsetNet dq;
  Tensor mu_r, mu_k, mu_v;
  ConvLayer r_proj, k_proj, v_proj;  // 1x1, C -> C
  ConvLayer rfft_gate;               // 1x1 over the (N, 2C, 1, T) sequence
  ConvLayer out_proj;                // 1x1, C -> C
  WkvParams wkv;                     // 2C channels
  BlockOptions options;

  static FourierMixParams create(ParameterStore& store, const std::string& prefix, int channels,
                                 const BlockOptions& options);
  int channels() const { return out_proj.spec.out_ch; }
};

struct ChannelMixParams {
  DqOffsetNet dq;
  Tensor mu_r, mu_k;
  ConvLayer r_proj, k_proj;  // 1x1, C -> C
  ConvLayer value;           // 1x1, C -> gamma C, no bias
  ConvLayer output;          // 1x1, gamma C -> C, no bias

  static ChannelMixParams create(ParameterStore& store, const std::string& prefix, int channels,
                                 const BlockOptions& options);
};

struct FrwkvBlockParams {
  LayerNormLayer ln1, ln2;
  FourierMixParams fmix;
  ChannelMixParams cmix;

  static FrwkvBlockParams create(ParameterStore& store, const std::string& prefix, int channels,
                                 const BlockOptions& options);
};

/// Intermediate tensors of one Fourier Mix evaluation.
struct FourierMixTrace {
  Tensor r_s, k_s, v_s;
  Tensor k_fft, v_fft;  // (N, 2C, 1, T)
  Tensor wkv;
  Tensor o_fft_seq;     // gated sequence
  Tensor o_fft;         // back in the spatial domain, (N, C, H, W)
  Tensor out;
};

/// Spatial -> half-plane spectrum -> Bi-WKV over the frequency-ordered
/// sequence -> spatial, gated in both domains. `trace` is optional.
Tensor fourier_mix(const Tensor& x, const FourierMixParams& p, const SpectralOrdering& ord,
                   FourierMixTrace* trace = nullptr);
/// Uses the cached ordering for the input size.
Tensor fourier_mix(const Tensor& x, const FourierMixParams& p);

/// output(value(sigmoid(R) * relu(K)^2)) at every pixel.
Tensor channel_mix(const Tensor& x, const ChannelMixParams& p);

/// x' = x + fourier_mix(LN1(x)); out = x' + channel_mix(LN2(x')).
Tensor frwkv_block(const Tensor& x, const FrwkvBlockParams& p);

FRWKV_END_NAMESPACE
