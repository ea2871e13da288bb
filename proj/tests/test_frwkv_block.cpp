#include <chrono>

#include "doctest.h"
#include "frwkv/frwkv_block.hpp"
#include "frwkv/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;
using frwkv::verify::random_tensor;

namespace {

void zero(const ConvLayer& c) {
  for (const Tensor& t : {c.weight, c.bias}) {
    if (t.defined()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), Real(0));
  }
}

}  // namespace

TEST_SUITE("frwkv-block") {

TEST_CASE("fourier mix preserves shape and vanishes with a zero output projection") {
  ParameterStore st(1);
  const FourierMixParams p = FourierMixParams::create(st, "f", 8, BlockOptions{});
  const Tensor x = random_tensor(Shape{2, 8, 16, 16}, 2);
  CHECK(fourier_mix(x, p).shape() == x.shape());
  zero(p.out_proj);
  CHECK(test::max_abs(fourier_mix(x, p)) == 0);
}

TEST_CASE("fourier mix equals the step-by-step oracle in every gating and order") {
  for (const GatingMode gating : {GatingMode::dual, GatingMode::spatial_only, GatingMode::fourier_only}) {
    for (const SeqOrder order : {SeqOrder::distance, SeqOrder::row_major}) {
      for (const bool sig : {false, true}) {
        BlockOptions opt;
        opt.gating = gating;
        opt.seq_order = order;
        opt.sigmoid_spatial_gate = sig;
        ParameterStore st(3);
        const FourierMixParams p = FourierMixParams::create(st, "f", 4, opt);
        verify::randomize(st, 4, 0.5);
        const Tensor x = random_tensor(Shape{2, 4, 6, 5}, 5);
        const Tensor got = fourier_mix(x, p);
        CHECK(max_abs_diff(got, oracle::fourier_mix(x, p)) <= 1e-6 * std::max(1.0, test::max_abs(got)));
      }
    }
  }
}

TEST_CASE("ablated gating drops the unused parameters") {
  BlockOptions opt;
  opt.gating = GatingMode::spatial_only;
  ParameterStore a;
  CHECK_FALSE(FourierMixParams::create(a, "f", 4, opt).rfft_gate.weight.defined());
  opt.gating = GatingMode::fourier_only;
  ParameterStore b;
  const FourierMixParams p = FourierMixParams::create(b, "f", 4, opt);
  CHECK_FALSE(p.r_proj.weight.defined());
  CHECK_FALSE(p.mu_r.defined());
}

TEST_CASE("the spectral path is lossless with attention and gates removed") {
  BlockOptions opt;
  opt.bypass_wkv = true;
  opt.gating = GatingMode::spatial_only;
  ParameterStore st(6);
  const FourierMixParams p = FourierMixParams::create(st, "f", 4, opt);
  verify::randomize(st, 7, 0.5);
  const Tensor x = random_tensor(Shape{1, 4, 8, 6}, 8);
  FourierMixTrace trace;
  fourier_mix(x, p, *cached_ordering(SeqOrder::distance, 8, 4), &trace);
  CHECK(max_abs_diff(trace.o_fft, trace.v_s) <= 1e-12);
}

TEST_CASE("fourier mix rejects a mismatched ordering") {
  ParameterStore st(9);
  const FourierMixParams p = FourierMixParams::create(st, "f", 4, BlockOptions{});
  CHECK_THROWS(fourier_mix(random_tensor(Shape{1, 4, 8, 8}, 10), p, build_ordering(8, 4)));
}

TEST_CASE("channel mix examples") {
  ParameterStore st(11);
  const ChannelMixParams p = ChannelMixParams::create(st, "c", 8, BlockOptions{});
  verify::randomize(st, 12, 0.5);
  const Tensor x = random_tensor(Shape{2, 8, 5, 4}, 13);
  CHECK(max_abs_diff(channel_mix(x, p), oracle::channel_mix(x, p)) <= 1e-12);

  // Zero key weights with a negative bias: relu(K)^2 = 0 everywhere.
  zero(p.k_proj);
  std::fill(p.k_proj.bias.mutable_data().begin(), p.k_proj.bias.mutable_data().end(), Real(-1));
  CHECK(test::max_abs(channel_mix(x, p)) == 0);

  verify::randomize(st, 14, 0.5);
  zero(p.output);
  CHECK(test::max_abs(channel_mix(x, p)) == 0);
}

TEST_CASE("hidden ratio sets the value width") {
  BlockOptions opt;
  opt.gamma = 3;
  ParameterStore st;
  const ChannelMixParams p = ChannelMixParams::create(st, "c", 8, opt);
  CHECK(p.value.weight.shape() == Shape{24, 8, 1, 1});
  CHECK(p.output.weight.shape() == Shape{8, 24, 1, 1});
}

TEST_CASE("block residual identity and shape") {
  ParameterStore st(15);
  const FrwkvBlockParams p = FrwkvBlockParams::create(st, "b", 8, BlockOptions{});
  verify::randomize(st, 16, 0.5);
  const Tensor x = random_tensor(Shape{1, 8, 12, 10}, 17);
  CHECK(frwkv_block(x, p).shape() == x.shape());
  zero(p.fmix.out_proj);
  zero(p.cmix.output);
  CHECK(test::bitwise_equal(frwkv_block(x, p), x));
}

TEST_CASE("block gradients match finite differences") {
  ParameterStore st(18);
  const FrwkvBlockParams p = FrwkvBlockParams::create(st, "b", 8, BlockOptions{});
  verify::randomize(st, 19, 0.4);
  const Tensor x = random_tensor(Shape{1, 8, 8, 8}, 20, -1, 1, true);
  auto probes = verify::probes_from(st);
  probes.push_back({"x", x});
  const auto r =
      verify::grad_check([&] { return verify::random_projection(frwkv_block(x, p), 21); }, probes, 40, 22);
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("fourier mix time scales with pixel count") {
  ParameterStore st(23);
  const FourierMixParams p = FourierMixParams::create(st, "f", 8, BlockOptions{});
  autograd::NoGradGuard guard;
  const Tensor small = random_tensor(Shape{1, 8, 32, 32}, 24);
  const Tensor large = random_tensor(Shape{1, 8, 64, 64}, 25);
  auto time = [&](const Tensor& x) {
    const auto s = std::chrono::steady_clock::now();
    for (int i = 0; i < 8; ++i) fourier_mix(x, p);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
  };
  time(small);
  time(large);
  double t_small = INFINITY;
  double t_large = INFINITY;
  for (int rep = 0; rep < 20; ++rep) {
    t_small = std::min(t_small, time(small));
    t_large = std::min(t_large, time(large));
  }
  const double ratio = t_large / t_small;
  CHECK(ratio >= 3);
  CHECK(ratio <= 5.5);
}

}  // TEST_SUITE
