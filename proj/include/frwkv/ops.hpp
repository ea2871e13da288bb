#pragma once

#include <span>

#include "frwkv/tensor.hpp"

FRWKV_BEGIN_NAMESPACE

// Elementwise arithmetic. `b` either matches `a` exactly or is broadcast per
// channel against a rank-4 `a` (N,C,H,W): shapes (C), (1,C,1,1) share the
// vector across the batch, (N,C,1,1) holds one vector per sample.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Rejects any exact zero in `b`.
Tensor div(const Tensor& a, const Tensor& b);

/// Multiplies every channel of a (N,C,H,W) by the single-channel map w (N,1,H,W).
Tensor mul_planes(const Tensor& a, const Tensor& w);

Tensor add_scalar(const Tensor& a, Real s);
Tensor scale(const Tensor& a, Real s);
Tensor abs(const Tensor& a);

/// (M,K) x (K,N), or batched (B,M,K) x (B,K,N).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Affine map over the last axis: y[..., o] = sum_i x[..., i] W[o, i] + b[o].
/// `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Sum of all elements, accumulated in flat (W, H, C, N) order.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, const Shape& shape);

/// Concatenation / slicing along axis 1.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& a, int begin, int count);

FRWKV_END_NAMESPACE
