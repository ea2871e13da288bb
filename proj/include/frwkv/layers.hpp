#pragma once

#include <string>

#include "frwkv/nn.hpp"
#include "frwkv/params.hpp"

FRWKV_BEGIN_NAMESPACE

/// Convolution weights registered in a ParameterStore under `<name>.weight`
/// and `<name>.bias`.
struct ConvLayer {
  Conv2dSpec spec;
  Tensor weight;
  Tensor bias;  // undefined when created without bias

  /// Weights default to fan-in uniform, bias to zero.
  static ConvLayer create(ParameterStore& store, const std::string& name, const Conv2dSpec& spec,
                          bool with_bias = true);
  static ConvLayer create(ParameterStore& store, const std::string& name, const Conv2dSpec& spec,
                          const Init& weight_init, bool with_bias = true);

  Tensor operator()(const Tensor& x) const { return conv2d(x, spec, weight, bias); }
};

inline Conv2dSpec pointwise(int in_ch, int out_ch) { return {in_ch, out_ch, 1, 1, false, Padding::replicate}; }
inline Conv2dSpec depthwise3x3(int ch) { return {ch, ch, 3, 1, true, Padding::replicate}; }

/// Channel layer norm with unit gain and zero bias at init.
struct LayerNormLayer {
  Tensor gain;
  Tensor bias;

  static LayerNormLayer create(ParameterStore& store, const std::string& name, int channels);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

FRWKV_END_NAMESPACE
