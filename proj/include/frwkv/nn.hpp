#pragma once

#include "frwkv/kernels.hpp"
#include "frwkv/tensor.hpp"

FRWKV_BEGIN_NAMESPACE

struct Conv2dSpec {
  int in_ch = 1;
  int out_ch = 1;
  int kernel = 1;  // odd
  int stride = 1;  // 1 or 2
  bool depthwise = false;
  Padding padding = Padding::replicate;

  /// Throws on an inconsistent spec.
  void validate() const;
  Shape weight_shape() const;
  std::int64_t parameter_count(bool with_bias = true) const;
};

/// Same-padded cross-correlation. Output spatial extent is ceil(H / stride).
/// `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Conv2dSpec& spec, const Tensor& weight, const Tensor& bias);

/// Samples x (N,C,H,W) at absolute (row, col) positions given by coords
/// (N, 2*groups, H, W); channel group g uses coordinate planes (2g, 2g+1).
/// Positions are clamped to [0,H-1] x [0,W-1]. Differentiable in x and coords.
Tensor bilinear_sample(const Tensor& x, const Tensor& coords, int groups = 1);

enum class Activation { gelu, sigmoid, squared_relu };

Tensor activation(Activation kind, const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor squared_relu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

/// Normalizes over channels at each (n, h, w), then applies per-channel gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = Real(1e-6));

/// (N,C,H,W) -> (N,C,1,1) spatial mean.
Tensor global_avg_pool(const Tensor& x);

/// (N,4C,H,W) -> (N,C,2H,2W) depth-to-space, and its inverse.
Tensor pixel_shuffle(const Tensor& x);
Tensor pixel_unshuffle(const Tensor& x);

/// Depthwise convolution of x (N,C,H,W) with one k x k kernel per (n, c);
/// kernels has shape (N, C, k*k). Stride 1, same padding.
Tensor dynamic_depthwise_conv(const Tensor& x, const Tensor& kernels, int k,
                              Padding padding = Padding::replicate);

FRWKV_END_NAMESPACE
