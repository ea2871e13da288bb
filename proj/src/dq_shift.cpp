#include "frwkv/dq_shift.hpp"

#include <stdexcept>

#include "frwkv/ops.hpp"

FRWKV_BEGIN_NAMESPACE

DqOffsetNet DqOffsetNet::create(ParameterStore& store, const std::string& prefix, int channels, DqShiftMode mode) {
  if (channels % kShiftGroups != 0) {
    throw std::invalid_argument("dq_shift: channel count " + std::to_string(channels) + " is not divisible by 4");
  }
  DqOffsetNet net;
  net.mode = mode;
  net.width = channels;
  if (mode == DqShiftMode::fixed_only) return net;
  net.dwconv = ConvLayer::create(store, prefix + ".offset_dwconv", depthwise3x3(channels));
  net.offset_proj =
      ConvLayer::create(store, prefix + ".offset_proj", pointwise(channels, kOffsetChannels), Init::zeros());
  if (mode != DqShiftMode::no_gate) {
    net.gate_proj = ConvLayer::create(store, prefix + ".gate_proj", pointwise(channels, kOffsetChannels));
  }
  return net;
}

Tensor create_shift_scale(ParameterStore& store, const std::string& name, int channels) {
  return store.add(name, Shape{channels}, Init::zeros());
}

Tensor dynamic_offsets(const Tensor& x, const DqOffsetNet& net) {
  if (net.mode == DqShiftMode::fixed_only) throw std::logic_error("dynamic_offsets: net has no dynamic branch");
  if (x.rank() != 4 || x.shape().c() != net.channels()) {
    throw std::invalid_argument("dynamic_offsets: input " + x.shape().str() + " does not match " +
                                std::to_string(net.channels()) + " channels");
  }
  Tensor d = net.offset_proj(gelu(net.dwconv(x)));
  if (net.mode == DqShiftMode::no_gate) return d;
  return mul(d, sigmoid(net.gate_proj(x)));
}

namespace {

Tensor base_grid(const Shape& s, bool with_fixed) {
  const int h = s.h();
  const int w = s.w();
  std::vector<Real> grid(static_cast<std::size_t>(s.n()) * kOffsetChannels * h * w);
  std::size_t i = 0;
  for (int n = 0; n < s.n(); ++n) {
    for (int g = 0; g < kShiftGroups; ++g) {
      const int dr = with_fixed ? kFixedOffsets[static_cast<std::size_t>(g)][0] : 0;
      const int dc = with_fixed ? kFixedOffsets[static_cast<std::size_t>(g)][1] : 0;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) grid[i++] = static_cast<Real>(y + dr);
      }
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) grid[i++] = static_cast<Real>(xx + dc);
      }
    }
  }
  return Tensor::from_data(Shape{s.n(), kOffsetChannels, h, w}, std::move(grid));
}

}  // namespace

Tensor shift_coordinates(const Tensor& x, const DqOffsetNet& net) {
  if (x.rank() != 4 || x.shape().c() % kShiftGroups != 0) {
    throw std::invalid_argument("dq_shift: expected N,C,H,W with C divisible by 4, got " + x.shape().str());
  }
  if (x.shape().c() != net.channels()) {
    throw std::invalid_argument("dq_shift: input " + x.shape().str() + " does not match " +
                                std::to_string(net.channels()) + " channels");
  }
  const Tensor base = base_grid(x.shape(), net.mode != DqShiftMode::dynamic_only);
  if (net.mode == DqShiftMode::fixed_only) return base;
  return add(base, dynamic_offsets(x, net));
}

Tensor shifted_features(const Tensor& x, const DqOffsetNet& net) {
  return bilinear_sample(x, shift_coordinates(x, net), kShiftGroups);
}

Tensor dq_shift(const Tensor& x, const DqOffsetNet& net, const Tensor& mu) {
  const Tensor mus[] = {mu};
  return dq_shift_branches(x, net, mus).front();
}

std::vector<Tensor> dq_shift_branches(const Tensor& x, const DqOffsetNet& net, std::span<const Tensor> mus) {
  const Tensor shifted = shifted_features(x, net);
  std::vector<Tensor> out;
  out.reserve(mus.size());
  for (const Tensor& mu : mus) out.push_back(add(x, mul(shifted, add_scalar(mu, Real(1)))));
  return out;
}

FRWKV_END_NAMESPACE
