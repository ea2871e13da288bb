#include "frwkv/sbm.hpp"

#include <stdexcept>
#include <vector>

#include "frwkv/ops.hpp"

FRWKV_BEGIN_NAMESPACE

SbmParams SbmParams::create(ParameterStore& store, const std::string& prefix, int channels, SbmMode mode) {
  SbmParams p;
  p.mode = mode;
  p.channels = channels;
  for (int s = 0; s < 3; ++s) {
    if (!p.has_scale(s)) continue;
    const int k = kSbmScales[static_cast<std::size_t>(s)];
    const std::string name = prefix + ".kernel_gen" + std::to_string(k);
    if (mode == SbmMode::random_kernels) {
      p.fixed_logits[static_cast<std::size_t>(s)] =
          store.add(name + ".fixed_logits", Shape{channels, k * k}, Init::uniform(1.0), false);
    } else {
      p.kernel_weight[static_cast<std::size_t>(s)] =
          store.add(name + ".weight", Shape{k * k, channels}, Init::fan_in_uniform(channels));
      p.kernel_bias[static_cast<std::size_t>(s)] = store.add(name + ".bias", Shape{k * k}, Init::zeros());
    }
  }
  if (mode != SbmMode::single_scale && mode != SbmMode::sum_fusion) {
    p.ksfu_dwconv = ConvLayer::create(store, prefix + ".ksfu_dwconv", depthwise3x3(3 * channels));
    p.ksfu_proj = ConvLayer::create(store, prefix + ".ksfu_proj", pointwise(3 * channels, 3));
  }
  if (mode != SbmMode::additive) p.alpha = store.add(prefix + ".alpha", Shape{channels}, Init::constant(1.0));
  p.beta = store.add(prefix + ".beta", Shape{channels}, Init::constant(1.0));
  p.fuse_proj = ConvLayer::create(store, prefix + ".fuse_proj", pointwise(2 * channels, channels));
  return p;
}

Tensor similarity(const Tensor& x_e, const Tensor& x_d) {
  if (x_e.rank() != 4 || x_d.rank() != 4 || x_e.shape().n() != x_d.shape().n() ||
      x_e.shape().c() != x_d.shape().c()) {
    throw std::invalid_argument("similarity: channel mismatch " + x_e.shape().str() + " vs " + x_d.shape().str());
  }
  const int n = x_e.shape().n();
  const int c = x_e.shape().c();
  const Tensor z_e = reshape(global_avg_pool(x_e), Shape{n, c, 1});
  const Tensor z_d = reshape(global_avg_pool(x_d), Shape{n, 1, c});
  return matmul(z_e, z_d);
}

Tensor dynamic_kernels(const Tensor& sim, const Tensor& weight, const Tensor& bias) {
  return softmax(linear(sim, weight, bias), -1);
}

Tensor dsk_apply(const Tensor& x_e, const Tensor& kernels, int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("dsk_apply: kernel size must be odd");
  return dynamic_depthwise_conv(x_e, kernels, k, Padding::replicate);
}

Tensor ksfu_weights(const Tensor& x3, const Tensor& x5, const Tensor& x7, const SbmParams& p) {
  if (x3.shape() != x5.shape() || x3.shape() != x7.shape()) {
    throw std::invalid_argument("ksfu: scale features must share a shape");
  }
  const Tensor parts[] = {x3, x5, x7};
  return softmax(p.ksfu_proj(p.ksfu_dwconv(concat_channels(parts))), 1);
}

Tensor ksfu(const Tensor& x3, const Tensor& x5, const Tensor& x7, const SbmParams& p) {
  const Tensor w = ksfu_weights(x3, x5, x7, p);
  const Tensor xs[] = {x3, x5, x7};
  Tensor out;
  for (int s = 0; s < 3; ++s) {
    const Tensor term = mul_planes(xs[s], slice_channels(w, s, 1));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

Tensor semantic_replace(const Tensor& x_e, const Tensor& x_sem, const SbmParams& p) {
  if (x_e.shape() != x_sem.shape()) throw std::invalid_argument("semantic_replace: shape mismatch");
  const Tensor injected = mul(x_sem, p.beta);
  if (p.mode == SbmMode::additive) return add(x_e, injected);
  return add(sub(x_e, mul(global_avg_pool(x_e), p.alpha)), injected);
}

Tensor semantic_replace_and_fuse(const Tensor& x_e, const Tensor& x_d, const Tensor& x_sem, const SbmParams& p) {
  if (x_e.shape() != x_d.shape()) {
    throw std::invalid_argument("sbm: encoder " + x_e.shape().str() + " and decoder " + x_d.shape().str() +
                                " features differ");
  }
  const Tensor parts[] = {semantic_replace(x_e, x_sem, p), x_d};
  return p.fuse_proj(concat_channels(parts));
}

Tensor sbm_kernels(const Tensor& x_e, const Tensor& x_d, int scale_index, const SbmParams& p) {
  const auto s = static_cast<std::size_t>(scale_index);
  if (p.mode == SbmMode::random_kernels) {
    const Tensor& logits = p.fixed_logits[s];
    const int n = x_e.shape().n();
    const int c = logits.shape()[0];
    const int kk = logits.shape()[1];
    std::vector<Real> tiled;
    tiled.reserve(static_cast<std::size_t>(n) * logits.numel());
    for (int i = 0; i < n; ++i) tiled.insert(tiled.end(), logits.data().begin(), logits.data().end());
    return softmax(Tensor::from_data(Shape{n, c, kk}, std::move(tiled)), -1);
  }
  return dynamic_kernels(similarity(x_e, x_d), p.kernel_weight[s], p.kernel_bias[s]);
}

Tensor sbm_semantic(const Tensor& x_e, const Tensor& x_d, const SbmParams& p) {
  std::array<Tensor, 3> scaled;
  for (int s = 0; s < 3; ++s) {
    if (!p.has_scale(s)) continue;
    scaled[static_cast<std::size_t>(s)] =
        dsk_apply(x_e, sbm_kernels(x_e, x_d, s, p), kSbmScales[static_cast<std::size_t>(s)]);
  }
  switch (p.mode) {
    case SbmMode::single_scale:
      return scaled[1];
    case SbmMode::sum_fusion:
      return add(add(scaled[0], scaled[1]), scaled[2]);
    default:
      return ksfu(scaled[0], scaled[1], scaled[2], p);
  }
}

Tensor sbm_forward(const Tensor& x_e, const Tensor& x_d, const SbmParams& p) {
  if (x_e.rank() != 4 || x_e.shape() != x_d.shape() || x_e.shape().c() != p.channels) {
    throw std::invalid_argument("sbm: inputs " + x_e.shape().str() + " / " + x_d.shape().str() +
                                " do not match module width " + std::to_string(p.channels));
  }
  return semantic_replace_and_fuse(x_e, x_d, sbm_semantic(x_e, x_d, p), p);
}

FRWKV_END_NAMESPACE
