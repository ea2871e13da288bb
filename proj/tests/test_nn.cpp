#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "frwkv/nn.hpp"
#include "frwkv/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;
using frwkv::test::tensor;
using frwkv::test::values;
using frwkv::verify::random_projection;
using frwkv::verify::random_tensor;

namespace {

double grad_err(const std::function<Tensor()>& fn, std::vector<verify::GradProbe> probes, int samples = 16) {
  return verify::grad_check(fn, probes, samples, 7).max_rel_err;
}

}  // namespace

TEST_SUITE("nn-primitives") {

TEST_CASE("identity convolutions leave the input unchanged") {
  const Tensor x = random_tensor(Shape{2, 3, 5, 4}, 1);
  const Conv2dSpec pw{3, 3, 1, 1, false, Padding::replicate};
  const Tensor eye = tensor(Shape{3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(test::bitwise_equal(conv2d(x, pw, eye, Tensor{}), x));

  const Conv2dSpec dw{3, 3, 3, 1, true, Padding::replicate};
  std::vector<Real> delta(27, 0);
  for (int c = 0; c < 3; ++c) delta[static_cast<std::size_t>(c * 9 + 4)] = 1;
  CHECK(test::bitwise_equal(conv2d(x, dw, Tensor::from_data(Shape{3, 1, 3, 3}, delta), Tensor{}), x));
}

TEST_CASE("conv2d matches the loop oracle") {
  for (const Padding pad : {Padding::replicate, Padding::zero}) {
    for (const int stride : {1, 2}) {
      for (const bool depthwise : {false, true}) {
        const int out = depthwise ? 3 : 4;
        const Conv2dSpec spec{3, out, 3, stride, depthwise, pad};
        const Tensor x = random_tensor(Shape{2, 3, 5, 5}, 2);
        const Tensor w = random_tensor(spec.weight_shape(), 3);
        const Tensor b = random_tensor(Shape{out}, 4);
        CHECK(max_abs_diff(conv2d(x, spec, w, b), oracle::conv2d(x, spec, w, b)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("1x1 convolution equals a per-pixel matrix product") {
  const Tensor x = random_tensor(Shape{1, 3, 4, 4}, 5);
  const Tensor w = random_tensor(Shape{2, 3, 1, 1}, 6);
  const Tensor y = conv2d(x, Conv2dSpec{3, 2, 1, 1, false, Padding::replicate}, w, Tensor{});
  for (int p = 0; p < 16; ++p) {
    for (int o = 0; o < 2; ++o) {
      double ref = 0;
      for (int i = 0; i < 3; ++i) ref += w.data()[static_cast<std::size_t>(o * 3 + i)] * x.data()[static_cast<std::size_t>(i * 16 + p)];
      CHECK(std::abs(y.data()[static_cast<std::size_t>(o * 16 + p)] - ref) <= 1e-12);
    }
  }
}

TEST_CASE("replicate-padded normalized depthwise kernel keeps constants") {
  const Tensor x = Tensor::full(Shape{1, 2, 6, 5}, 0.37);
  const Tensor k = random_tensor(Shape{2, 1, 5, 5}, 7, 0, 1);
  std::vector<Real> norm(k.data().begin(), k.data().end());
  for (int c = 0; c < 2; ++c) {
    double s = 0;
    for (int i = 0; i < 25; ++i) s += norm[static_cast<std::size_t>(c * 25 + i)];
    for (int i = 0; i < 25; ++i) norm[static_cast<std::size_t>(c * 25 + i)] /= s;
  }
  const Tensor y = conv2d(x, Conv2dSpec{2, 2, 5, 1, true, Padding::replicate},
                          Tensor::from_data(k.shape(), norm), Tensor{});
  CHECK(max_abs_diff(y, x) <= 1e-15);
}

TEST_CASE("bilinear sampling examples") {
  const Tensor x = tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto at = [&](double r, double c) { return bilinear_sample(x, tensor(Shape{1, 2, 2, 2}, {r, r, r, r, c, c, c, c})).data()[0]; };
  CHECK(at(0.5, 0.5) == doctest::Approx(2.5));
  CHECK(at(0, 1) == 2);
  CHECK(at(-0.7, 0) == 1);
  CHECK(at(5, 5) == 4);
}

TEST_CASE("bilinear sampling matches the oracle for grouped coordinates") {
  const Tensor x = random_tensor(Shape{2, 8, 5, 6}, 8);
  const Tensor coords = random_tensor(Shape{2, 8, 5, 6}, 9, -1, 6);
  CHECK(max_abs_diff(bilinear_sample(x, coords, 4), oracle::bilinear(x, coords, 4)) <= 1e-12);
}

TEST_CASE("activation examples") {
  CHECK(sigmoid(tensor(Shape{1}, {0})).data()[0] == 0.5);
  CHECK(values(squared_relu(tensor(Shape{2}, {-3, 2}))) == std::vector<double>{0, 4});
  const Tensor s = softmax(tensor(Shape{3}, {0, 0, 0}), 0);
  for (Real v : s.data()) CHECK(v == doctest::Approx(1.0 / 3));
  CHECK(gelu(tensor(Shape{1}, {1})).data()[0] == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))));
  CHECK(test::bitwise_equal(activation(Activation::sigmoid, s), sigmoid(s)));
}

TEST_CASE("softmax normalizes along the requested axis") {
  const Tensor x = random_tensor(Shape{2, 3, 4}, 10, -20, 20);
  for (int axis = 0; axis < 3; ++axis) {
    const Tensor y = softmax(x, axis);
    const int extent = x.shape()[axis];
    int stride = 1;
    for (int d = axis + 1; d < 3; ++d) stride *= x.shape()[d];
    for (int i = 0; i < 24; ++i) {
      if ((i / stride) % extent != 0) continue;
      double s = 0;
      for (int j = 0; j < extent; ++j) s += y.data()[static_cast<std::size_t>(i + j * stride)];
      CHECK(std::abs(s - 1) <= 1e-12);
    }
  }
}

TEST_CASE("layer norm examples and statistics") {
  const Tensor one = Tensor::full(Shape{2}, 1);
  const Tensor zero = Tensor::zeros(Shape{2});
  const Tensor y = layer_norm(tensor(Shape{1, 2, 1, 1}, {1, 3}), one, zero, 0);
  CHECK(values(y) == std::vector<double>{-1, 1});

  const Tensor bias = tensor(Shape{3}, {0.5, -1, 2});
  const Tensor c = layer_norm(Tensor::full(Shape{1, 3, 2, 2}, 4), Tensor::full(Shape{3}, 1), bias);
  for (int ch = 0; ch < 3; ++ch) CHECK(c.at(0, ch, 1, 1) == bias.data()[static_cast<std::size_t>(ch)]);

  const Tensor x = random_tensor(Shape{2, 5, 3, 3}, 11, -3, 3);
  const Tensor z = layer_norm(x, Tensor::full(Shape{5}, 1), Tensor::zeros(Shape{5}));
  for (int n = 0; n < 2; ++n) {
    for (int p = 0; p < 9; ++p) {
      double m = 0, v = 0;
      for (int ch = 0; ch < 5; ++ch) m += z.at(n, ch, p / 3, p % 3) / 5;
      for (int ch = 0; ch < 5; ++ch) v += std::pow(z.at(n, ch, p / 3, p % 3) - m, 2) / 5;
      CHECK(std::abs(m) <= 1e-6);
      CHECK(std::abs(v - 1) <= 1e-5);
    }
  }
  const Tensor g = random_tensor(Shape{5}, 12);
  const Tensor b = random_tensor(Shape{5}, 13);
  CHECK(max_abs_diff(layer_norm(x, g, b), oracle::layer_norm(x, g, b, 1e-6)) <= 1e-12);
}

TEST_CASE("global average pooling") {
  CHECK(global_avg_pool(tensor(Shape{1, 1, 2, 2}, {0, 2, 4, 6})).data()[0] == 3);
  CHECK(values(global_avg_pool(Tensor::full(Shape{1, 2, 3, 3}, 1.5))) == std::vector<double>{1.5, 1.5});
  const Tensor x = random_tensor(Shape{2, 3, 4, 5}, 14);
  const Tensor g = global_avg_pool(x);
  CHECK(g.shape() == Shape{2, 3, 1, 1});
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (int i = 0; i < 20; ++i) s += x.at(n, c, i / 5, i % 5);
      CHECK(std::abs(g.data()[static_cast<std::size_t>(n * 3 + c)] - s / 20) <= 1e-12);
    }
  }
}

TEST_CASE("pixel shuffle layout and inverse") {
  CHECK(values(pixel_shuffle(tensor(Shape{1, 4, 1, 1}, {1, 2, 3, 4}))) == std::vector<double>{1, 2, 3, 4});
  const Tensor x = random_tensor(Shape{1, 8, 3, 3}, 15);
  const Tensor y = pixel_shuffle(x);
  CHECK(y.shape() == Shape{1, 2, 6, 6});
  auto sorted = [](const Tensor& t) {
    auto v = values(t);
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted(y) == sorted(x));
  CHECK(test::bitwise_equal(pixel_unshuffle(y), x));
}

TEST_CASE("dynamic depthwise convolution matches the oracle") {
  const Tensor x = random_tensor(Shape{2, 3, 6, 5}, 16);
  const Tensor k = random_tensor(Shape{2, 3, 25}, 17);
  CHECK(max_abs_diff(dynamic_depthwise_conv(x, k, 5), oracle::dynamic_conv(x, k, 5)) <= 1e-12);
}

TEST_CASE("primitive gradients match finite differences") {
  const Tensor x = random_tensor(Shape{2, 4, 5, 6}, 18, -1, 1, true);
  const Conv2dSpec full{4, 3, 3, 2, false, Padding::replicate};
  const Tensor w = random_tensor(full.weight_shape(), 19, -1, 1, true);
  const Tensor b = random_tensor(Shape{3}, 20, -1, 1, true);
  CHECK(grad_err([&] { return random_projection(conv2d(x, full, w, b), 1); }, {{"x", x}, {"w", w}, {"b", b}}) <= 1e-6);

  const Conv2dSpec dw{4, 4, 3, 1, true, Padding::zero};
  const Tensor wd = random_tensor(dw.weight_shape(), 21, -1, 1, true);
  CHECK(grad_err([&] { return random_projection(conv2d(x, dw, wd, Tensor{}), 2); }, {{"x", x}, {"w", wd}}) <= 1e-6);

  // Coordinates kept strictly inside so every sample is differentiable.
  const Tensor coords = random_tensor(Shape{2, 4, 5, 6}, 22, 0.1, 3.9, true);
  CHECK(grad_err([&] { return random_projection(bilinear_sample(x, coords, 2), 3); }, {{"x", x}, {"coords", coords}}) <=
        1e-6);

  CHECK(grad_err([&] { return random_projection(gelu(x), 4); }, {{"x", x}}) <= 1e-6);
  CHECK(grad_err([&] { return random_projection(sigmoid(x), 5); }, {{"x", x}}) <= 1e-6);
  CHECK(grad_err([&] { return random_projection(squared_relu(x), 6); }, {{"x", x}}) <= 1e-6);
  CHECK(grad_err([&] { return random_projection(softmax(x, 1), 7); }, {{"x", x}}) <= 1e-6);

  const Tensor g = random_tensor(Shape{4}, 23, 0.5, 1.5, true);
  const Tensor bb = random_tensor(Shape{4}, 24, -1, 1, true);
  CHECK(grad_err([&] { return random_projection(layer_norm(x, g, bb), 8); }, {{"x", x}, {"g", g}, {"b", bb}}) <= 1e-6);
  CHECK(grad_err([&] { return random_projection(global_avg_pool(x), 9); }, {{"x", x}}) <= 1e-6);

  const Tensor xs = random_tensor(Shape{1, 8, 3, 3}, 25, -1, 1, true);
  CHECK(grad_err([&] { return random_projection(pixel_shuffle(xs), 10); }, {{"x", xs}}) <= 1e-6);
  const Tensor xe = random_tensor(Shape{1, 2, 4, 6}, 27, -1, 1, true);
  CHECK(grad_err([&] { return random_projection(pixel_unshuffle(xe), 11); }, {{"x", xe}}) <= 1e-6);

  const Tensor kern = random_tensor(Shape{2, 4, 9}, 26, -1, 1, true);
  CHECK(grad_err([&] { return random_projection(dynamic_depthwise_conv(x, kern, 3), 12); }, {{"x", x}, {"k", kern}}) <=
        1e-6);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS((Conv2dSpec{3, 4, 2, 1, false, Padding::replicate}.validate()));
  CHECK_THROWS((Conv2dSpec{3, 4, 3, 3, false, Padding::replicate}.validate()));
  CHECK_THROWS((Conv2dSpec{3, 4, 3, 1, true, Padding::replicate}.validate()));
  CHECK_THROWS(pixel_shuffle(Tensor::zeros(Shape{1, 3, 2, 2})));
}

}  // TEST_SUITE
