#include "frwkv/layers.hpp"

FRWKV_BEGIN_NAMESPACE

ConvLayer ConvLayer::create(ParameterStore& store, const std::string& name, const Conv2dSpec& spec,
                            bool with_bias) {
  const int fan_in = (spec.depthwise ? 1 : spec.in_ch) * spec.kernel * spec.kernel;
  return create(store, name, spec, Init::fan_in_uniform(fan_in), with_bias);
}

ConvLayer ConvLayer::create(ParameterStore& store, const std::string& name, const Conv2dSpec& spec,
                            const Init& weight_init, bool with_bias) {
  spec.validate();
  ConvLayer layer;
  layer.spec = spec;
  layer.weight = store.add(name + ".weight", spec.weight_shape(), weight_init);
  if (with_bias) layer.bias = store.add(name + ".bias", Shape{spec.out_ch}, Init::zeros());
  return layer;
}

LayerNormLayer LayerNormLayer::create(ParameterStore& store, const std::string& name, int channels) {
  return {store.add(name + ".gain", Shape{channels}, Init::constant(1.0)),
          store.add(name + ".bias", Shape{channels}, Init::zeros())};
}

FRWKV_END_NAMESPACE
