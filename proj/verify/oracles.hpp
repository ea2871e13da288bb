#pragma once

// Direct loop implementations used as references for the optimized library.
// None of them record gradients, and all accumulate in double or wider.

#include <utility>
#include <vector>

#include "frwkv/dq_shift.hpp"
#include "frwkv/frwkv_block.hpp"
#include "frwkv/sbm.hpp"
#include "frwkv/spectral.hpp"

FRWKV_BEGIN_NAMESPACE
namespace oracle {

/// Half-plane DFT by the double sum, (re, im) each N,C,H,W/2+1.
std::pair<Tensor, Tensor> dft2(const Tensor& x);
/// Inverse of dft2 by the double sum over the half plane with column weights.
Tensor idft2(const Tensor& re, const Tensor& im, int src_width);

/// Distance ordering by enumerating (distance, row-major index) pairs.
std::vector<int> ordering(int height, int width_f);

/// Same-padded convolution with clamped (replicate) or zero borders.
Tensor conv2d(const Tensor& x, const Conv2dSpec& spec, const Tensor& weight, const Tensor& bias);
/// Bilinear sampling at clamped absolute coordinates.
Tensor bilinear(const Tensor& x, const Tensor& coords, int groups);

/// Integer quad shift with clamped borders: x + X' where group g of X' is x
/// displaced by the fixed offset of g.
Tensor fixed_qshift(const Tensor& x);
/// D * sigmoid(gate) from loops over the net's weights.
Tensor dynamic_offsets(const Tensor& x, const DqOffsetNet& net);
Tensor dq_shift(const Tensor& x, const DqOffsetNet& net, const Tensor& mu);

Tensor bi_wkv(const Tensor& k, const Tensor& v, const Tensor& w_raw, const Tensor& u);

/// Per-pixel evaluation of the Channel Mix.
Tensor channel_mix(const Tensor& x, const ChannelMixParams& p);
/// Fourier Mix composed from the oracles above, one step at a time.
Tensor fourier_mix(const Tensor& x, const FourierMixParams& p);

/// Channel layer norm at each pixel.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor similarity(const Tensor& x_e, const Tensor& x_d);
Tensor dynamic_kernels(const Tensor& sim, const Tensor& weight, const Tensor& bias);
Tensor dynamic_conv(const Tensor& x, const Tensor& kernels, int k);
Tensor ksfu(const Tensor& x3, const Tensor& x5, const Tensor& x7, const SbmParams& p);
Tensor sbm_forward(const Tensor& x_e, const Tensor& x_d, const SbmParams& p);

}  // namespace oracle
FRWKV_END_NAMESPACE
