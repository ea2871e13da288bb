#include "frwkv/frwkv_block.hpp"

#include <stdexcept>

#include "frwkv/ops.hpp"

FRWKV_BEGIN_NAMESPACE

FourierMixParams FourierMixParams::create(ParameterStore& store, const std::string& prefix, int channels,
                                          const BlockOptions& options) {
  FourierMixParams p;
  p.options = options;
  p.dq = DqOffsetNet::create(store, prefix + ".dq", channels, options.dq_mode);
  const bool use_rs = options.gating != GatingMode::fourier_only;
  const bool use_rfft = options.gating != GatingMode::spatial_only;
  if (use_rs) p.mu_r = create_shift_scale(store, prefix + ".mu_r", channels);
  p.mu_k = create_shift_scale(store, prefix + ".mu_k", channels);
  p.mu_v = create_shift_scale(store, prefix + ".mu_v", channels);
  if (use_rs) p.r_proj = ConvLayer::create(store, prefix + ".r_proj", pointwise(channels, channels));
  p.k_proj = ConvLayer::create(store, prefix + ".k_proj", pointwise(channels, channels));
  p.v_proj = ConvLayer::create(store, prefix + ".v_proj", pointwise(channels, channels));
  if (use_rfft) p.rfft_gate = ConvLayer::create(store, prefix + ".rfft_gate", pointwise(2 * channels, 2 * channels));
  p.out_proj = ConvLayer::create(store, prefix + ".out_proj", pointwise(channels, channels));
  p.wkv = WkvParams::create(store, prefix + ".wkv", 2 * channels);
  return p;
}

ChannelMixParams ChannelMixParams::create(ParameterStore& store, const std::string& prefix, int channels,
                                          const BlockOptions& options) {
  if (options.gamma < 1) throw std::invalid_argument("channel_mix: gamma must be >= 1");
  ChannelMixParams p;
  p.dq = DqOffsetNet::create(store, prefix + ".dq", channels, options.dq_mode);
  p.mu_r = create_shift_scale(store, prefix + ".mu_r", channels);
  p.mu_k = create_shift_scale(store, prefix + ".mu_k", channels);
  p.r_proj = ConvLayer::create(store, prefix + ".r_proj", pointwise(channels, channels));
  p.k_proj = ConvLayer::create(store, prefix + ".k_proj", pointwise(channels, channels));
  p.value = ConvLayer::create(store, prefix + ".value", pointwise(channels, options.gamma * channels), false);
  p.output = ConvLayer::create(store, prefix + ".output", pointwise(options.gamma * channels, channels), false);
  return p;
}

FrwkvBlockParams FrwkvBlockParams::create(ParameterStore& store, const std::string& prefix, int channels,
                                          const BlockOptions& options) {
  FrwkvBlockParams p;
  p.ln1 = LayerNormLayer::create(store, prefix + ".ln1", channels);
  p.fmix = FourierMixParams::create(store, prefix + ".fmix", channels, options);
  p.ln2 = LayerNormLayer::create(store, prefix + ".ln2", channels);
  p.cmix = ChannelMixParams::create(store, prefix + ".cmix", channels, options);
  return p;
}

Tensor fourier_mix(const Tensor& x, const FourierMixParams& p, const SpectralOrdering& ord,
                   FourierMixTrace* trace) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s.c() != p.channels()) {
    throw std::invalid_argument("fourier_mix: input " + s.str() + " does not match " +
                                std::to_string(p.channels()) + " channels");
  }
  if (ord.height != s.h() || ord.width != half_width(s.w())) {
    throw std::invalid_argument("fourier_mix: ordering " + std::to_string(ord.height) + "x" +
                                std::to_string(ord.width) + " does not match input " + s.str());
  }
  const BlockOptions& opt = p.options;
  const bool use_rs = opt.gating != GatingMode::fourier_only;
  const bool use_rfft = opt.gating != GatingMode::spatial_only;

  std::vector<Tensor> mus;
  if (use_rs) mus.push_back(p.mu_r);
  mus.push_back(p.mu_k);
  mus.push_back(p.mu_v);
  const std::vector<Tensor> shifted = dq_shift_branches(x, p.dq, mus);
  const std::size_t kv = use_rs ? 1 : 0;
  Tensor r_s = use_rs ? p.r_proj(shifted[0]) : Tensor{};
  const Tensor k_s = p.k_proj(shifted[kv]);
  const Tensor v_s = p.v_proj(shifted[kv + 1]);

  // Keys enter exp() inside the scan, so they are taken at the scale of a
  // spatial mean rather than a spatial sum.
  const Real key_scale = Real(1) / (static_cast<Real>(s.h()) * static_cast<Real>(s.w()));
  const Tensor k_fft = scale(seq(rfft2_packed(k_s), ord), key_scale);
  const Tensor v_fft = seq(rfft2_packed(v_s), ord);
  const Tensor wkv = opt.bypass_wkv ? v_fft : bi_wkv_scan(k_fft, v_fft, p.wkv);
  const Tensor o_seq = use_rfft ? mul(sigmoid(p.rfft_gate(v_fft)), wkv) : wkv;
  const Tensor o_fft = irfft2_packed(iseq(o_seq, ord), s.w());

  Tensor gated = o_fft;
  if (use_rs) gated = mul(opt.sigmoid_spatial_gate ? sigmoid(r_s) : r_s, o_fft);
  Tensor out = p.out_proj(gated);
  if (trace != nullptr) *trace = {r_s, k_s, v_s, k_fft, v_fft, wkv, o_seq, o_fft, out};
  return out;
}

Tensor fourier_mix(const Tensor& x, const FourierMixParams& p) {
  if (x.rank() != 4) throw std::invalid_argument("fourier_mix: expected N,C,H,W, got " + x.shape().str());
  const auto ord = cached_ordering(p.options.seq_order, x.shape().h(), half_width(x.shape().w()));
  return fourier_mix(x, p, *ord);
}

Tensor channel_mix(const Tensor& x, const ChannelMixParams& p) {
  const Tensor mus[] = {p.mu_r, p.mu_k};
  const std::vector<Tensor> shifted = dq_shift_branches(x, p.dq, mus);
  const Tensor r = p.r_proj(shifted[0]);
  const Tensor k = p.k_proj(shifted[1]);
  return p.output(p.value(mul(sigmoid(r), squared_relu(k))));
}

Tensor frwkv_block(const Tensor& x, const FrwkvBlockParams& p) {
  const Tensor mid = add(x, fourier_mix(p.ln1(x), p.fmix));
  return add(mid, channel_mix(p.ln2(mid), p.cmix));
}

FRWKV_END_NAMESPACE
