#include <cmath>

#include "doctest.h"
#include "frwkv/ops.hpp"
#include "frwkv/sbm.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;
using frwkv::verify::random_tensor;

namespace {

void fill(const Tensor& t, Real v) {
  if (t.defined()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), v);
}

Tensor channel_means(const Tensor& x) { return global_avg_pool(x); }

}  // namespace

TEST_SUITE("sbm") {

TEST_CASE("similarity is the outer product of pooled features") {
  const Tensor e = random_tensor(Shape{2, 3, 4, 5}, 1);
  const Tensor d = random_tensor(Shape{2, 3, 4, 5}, 2);
  const Tensor s = similarity(e, d);
  REQUIRE(s.shape() == Shape{2, 3, 3});
  const Tensor ze = channel_means(e);
  const Tensor zd = channel_means(d);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double expect = ze.at(n, i, 0, 0) * zd.at(n, j, 0, 0);
        CHECK(s.data()[static_cast<std::size_t>((n * 3 + i) * 3 + j)] == doctest::Approx(expect).epsilon(1e-12));
      }
  CHECK(test::max_abs(similarity(e, Tensor::zeros(e.shape()))) == 0);
  CHECK(max_abs_diff(s, oracle::similarity(e, d)) <= 1e-14);
}

TEST_CASE("kernel rows are distributions and a blank generator gives the box filter") {
  const Tensor sim = random_tensor(Shape{2, 4, 4}, 3);
  const Tensor w = random_tensor(Shape{9, 4}, 4);
  const Tensor b = random_tensor(Shape{9}, 5);
  const Tensor k = dynamic_kernels(sim, w, b);
  REQUIRE(k.shape() == Shape{2, 4, 9});
  for (int row = 0; row < 8; ++row) {
    double sum = 0;
    for (int j = 0; j < 9; ++j) {
      const double v = k.data()[static_cast<std::size_t>(row * 9 + j)];
      CHECK(v > 0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1).epsilon(1e-12));
  }
  CHECK(max_abs_diff(k, oracle::dynamic_kernels(sim, w, b)) <= 1e-14);
  const Tensor flat = dynamic_kernels(sim, Tensor::zeros(w.shape()), Tensor::zeros(b.shape()));
  for (Real v : flat.data()) CHECK(v == doctest::Approx(1.0 / 9).epsilon(1e-14));
}

TEST_CASE("dynamic kernels preserve constants and a sharp kernel is the identity") {
  const int k = 5;
  const Tensor c = Tensor::full(Shape{1, 2, 6, 7}, 0.3);
  const Tensor kern = dynamic_kernels(random_tensor(Shape{1, 2, 2}, 6), random_tensor(Shape{25, 2}, 7),
                                      random_tensor(Shape{25}, 8));
  const Tensor blurred = dsk_apply(c, kern, k);
  for (Real v : blurred.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  std::vector<Real> logits(2 * 25, Real(0));
  logits[12] = logits[25 + 12] = 60;
  const Tensor sharp = softmax(Tensor::from_data(Shape{1, 2, 25}, logits), -1);
  const Tensor x = random_tensor(Shape{1, 2, 6, 7}, 9);
  CHECK(max_abs_diff(dsk_apply(x, sharp, k), x) <= 1e-20);
  CHECK(max_abs_diff(dsk_apply(x, kern, k), oracle::dynamic_conv(x, kern, k)) <= 1e-14);
  CHECK_THROWS(dsk_apply(x, kern, 4));
}

TEST_CASE("scale fusion is a per-pixel convex combination") {
  ParameterStore st(10);
  const SbmParams p = SbmParams::create(st, "s", 3, SbmMode::full);
  verify::randomize(st, 11, 1.0);
  const Tensor x3 = random_tensor(Shape{2, 3, 4, 4}, 12);
  const Tensor x5 = random_tensor(Shape{2, 3, 4, 4}, 13);
  const Tensor x7 = random_tensor(Shape{2, 3, 4, 4}, 14);

  CHECK(max_abs_diff(ksfu(x3, x3, x3, p), x3) <= 1e-14);
  CHECK(max_abs_diff(ksfu(x3, x5, x7, p), oracle::ksfu(x3, x5, x7, p)) <= 1e-14);

  const Tensor w = ksfu_weights(x3, x5, x7, p);
  const Tensor y = ksfu(x3, x5, x7, p);
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    const double lo = std::min({x3.data()[i], x5.data()[i], x7.data()[i]});
    const double hi = std::max({x3.data()[i], x5.data()[i], x7.data()[i]});
    CHECK(y.data()[i] >= lo - 1e-14);
    CHECK(y.data()[i] <= hi + 1e-14);
  }
  for (int h = 0; h < 4; ++h)
    CHECK(w.at(1, 0, h, 2) + w.at(1, 1, h, 2) + w.at(1, 2, h, 2) == doctest::Approx(1).epsilon(1e-12));

  fill(p.ksfu_proj.weight, 0);
  fill(p.ksfu_proj.bias, 0);
  p.ksfu_proj.bias.mutable_data()[2] = 30;
  CHECK(max_abs_diff(ksfu(x3, x5, x7, p), x7) <= 1e-12);
}

TEST_CASE("semantic replacement") {
  ParameterStore st(15);
  const SbmParams p = SbmParams::create(st, "s", 3, SbmMode::full);
  const Tensor e = random_tensor(Shape{1, 3, 5, 4}, 16);
  const Tensor sem = random_tensor(Shape{1, 3, 5, 4}, 17);

  fill(p.alpha, 0);
  fill(p.beta, 0);
  CHECK(max_abs_diff(semantic_replace(e, sem, p), e) == 0);

  fill(p.alpha, 1);
  const Tensor centred = semantic_replace(e, sem, p);
  const Tensor centred_means = channel_means(centred);
  for (Real m : centred_means.data()) CHECK(std::abs(m) <= 1e-15);

  fill(p.beta, 1);
  const Tensor dc_swapped = semantic_replace(e, sem, p);
  const Tensor means = channel_means(dc_swapped);
  const Tensor sem_means = channel_means(sem);
  for (int c = 0; c < 3; ++c) CHECK(means.data()[c] == doctest::Approx(sem_means.data()[c]).epsilon(1e-12));
}

TEST_CASE("pooling a constant image") {
  const Tensor x = Tensor::full(Shape{1, 2, 3, 3}, -1.5);
  const Tensor m = channel_means(x);
  for (Real v : m.data()) CHECK(v == -1.5);
}

TEST_CASE("module output matches the oracle in every mode") {
  for (const SbmMode mode : {SbmMode::full, SbmMode::random_kernels, SbmMode::single_scale, SbmMode::sum_fusion,
                             SbmMode::additive}) {
    ParameterStore st(18);
    const SbmParams p = SbmParams::create(st, "s", 4, mode);
    verify::randomize(st, 19, 1.0);
    const Tensor e = random_tensor(Shape{2, 4, 6, 5}, 20);
    const Tensor d = random_tensor(Shape{2, 4, 6, 5}, 21);
    const Tensor y = sbm_forward(e, d, p);
    CHECK(y.shape() == e.shape());
    CHECK(max_abs_diff(y, oracle::sbm_forward(e, d, p)) <= 1e-12);
  }
}

TEST_CASE("mode controls which parameters exist") {
  ParameterStore a;
  const SbmParams single = SbmParams::create(a, "s", 4, SbmMode::single_scale);
  CHECK_FALSE(single.kernel_weight[0].defined());
  CHECK(single.kernel_weight[1].defined());
  CHECK_FALSE(single.ksfu_proj.weight.defined());
  ParameterStore b;
  const SbmParams fixed = SbmParams::create(b, "s", 4, SbmMode::random_kernels);
  CHECK_FALSE(fixed.kernel_weight[2].defined());
  CHECK(fixed.fixed_logits[2].shape() == Shape{4, 49});
  CHECK(b.trainable_parameter_count() < b.total_parameter_count());
  ParameterStore c;
  CHECK_FALSE(SbmParams::create(c, "s", 4, SbmMode::additive).alpha.defined());
}

TEST_CASE("input validation") {
  ParameterStore st(22);
  const SbmParams p = SbmParams::create(st, "s", 4, SbmMode::full);
  CHECK_THROWS(sbm_forward(random_tensor(Shape{1, 4, 4, 4}, 1), random_tensor(Shape{1, 4, 4, 6}, 2), p));
  CHECK_THROWS(sbm_forward(random_tensor(Shape{1, 3, 4, 4}, 1), random_tensor(Shape{1, 3, 4, 4}, 2), p));
}

TEST_CASE("gradients match finite differences") {
  ParameterStore st(23);
  const SbmParams p = SbmParams::create(st, "s", 4, SbmMode::full);
  verify::randomize(st, 24, 0.5);
  const Tensor e = random_tensor(Shape{1, 4, 6, 6}, 25, -1, 1, true);
  const Tensor d = random_tensor(Shape{1, 4, 6, 6}, 26, -1, 1, true);
  auto probes = verify::probes_from(st);
  probes.push_back({"x_e", e});
  probes.push_back({"x_d", d});
  const auto r =
      verify::grad_check([&] { return verify::random_projection(sbm_forward(e, d, p), 27); }, probes, 40, 28);
  CHECK(r.max_rel_err <= 1e-4);
}

}  // TEST_SUITE
