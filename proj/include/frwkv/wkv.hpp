#pragma once

#include <string>

#include "frwkv/params.hpp"
#include "frwkv/tensor.hpp"

FRWKV_BEGIN_NAMESPACE

/// Per-channel decay and self bonus. The effective decay is exp(w_raw), so
/// w_raw = 0 gives decay 1.
struct WkvParams {
  Tensor w_raw;  // (C)
  Tensor u;      // (C)

  int channels() const { return static_cast<int>(w_raw.numel()); }
  static WkvParams create(ParameterStore& store, const std::string& prefix, int channels);
};

/// For token t in a row of length T:
///   wkv_t = (sum_{i != t} e^{-(|t-i|-1) w / T + k_i} v_i + e^{u + k_t} v_t)
///         / (sum_{i != t} e^{-(|t-i|-1) w / T + k_i} + e^{u + k_t})
/// with w = exp(w_raw). k and v are (C,T) or (N,C,1,T).
Tensor bi_wkv_scan(const Tensor& k, const Tensor& v, const WkvParams& p);

/// Direct O(T^2) evaluation with per-token max shifting, accumulated in
/// double. Not differentiable.
Tensor bi_wkv_oracle(const Tensor& k, const Tensor& v, const WkvParams& p);

FRWKV_END_NAMESPACE
