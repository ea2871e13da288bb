#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "frwkv/ops.hpp"
#include "frwkv/spectral.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;
using frwkv::verify::random_projection;
using frwkv::verify::random_tensor;

TEST_SUITE("spectral") {

TEST_CASE("half width") {
  CHECK(half_width(1) == 1);
  CHECK(half_width(4) == 3);
  CHECK(half_width(5) == 3);
  CHECK(half_width(64) == 33);
}

TEST_CASE("spectrum of a constant is its DC sum") {
  const ComplexSpectrum s = rfft2(Tensor::full(Shape{1, 1, 4, 4}, 0.75));
  CHECK(s.re.shape() == Shape{1, 1, 4, 3});
  CHECK(s.re.data()[0] == doctest::Approx(16 * 0.75));
  for (std::size_t i = 1; i < s.re.data().size(); ++i) CHECK(std::abs(s.re.data()[i]) <= 1e-12);
  for (Real v : s.im.data()) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("spectrum of a delta is flat") {
  std::vector<Real> d(20, 0);
  d[0] = 1;
  const ComplexSpectrum s = rfft2(Tensor::from_data(Shape{1, 1, 4, 5}, d));
  for (Real v : s.re.data()) CHECK(v == doctest::Approx(1));
  for (Real v : s.im.data()) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("rfft2 matches the DFT oracle on radix-2 and other sizes") {
  for (const auto& [h, w] : {std::pair{4, 4}, std::pair{8, 6}, std::pair{5, 7}, std::pair{1, 9}, std::pair{16, 1}}) {
    const Tensor x = random_tensor(Shape{2, 3, h, w}, static_cast<std::uint64_t>(h * 100 + w));
    const ComplexSpectrum s = rfft2(x);
    const auto [re, im] = oracle::dft2(x);
    CHECK(max_abs_diff(s.re, re) <= 1e-12);
    CHECK(max_abs_diff(s.im, im) <= 1e-12);
    CHECK(max_abs_diff(irfft2(s), oracle::idft2(s.re, s.im, w)) <= 1e-12);
  }
}

TEST_CASE("DC-only spectrum inverts to a constant image") {
  const int h = 4, w = 6;
  std::vector<Real> re(static_cast<std::size_t>(h * half_width(w)), 0);
  re[0] = h * w;
  const Tensor x = irfft2({Tensor::from_data(Shape{1, 1, h, half_width(w)}, re),
                           Tensor::zeros(Shape{1, 1, h, half_width(w)}), w});
  for (Real v : x.data()) CHECK(v == doctest::Approx(1));
}

TEST_CASE("irfft2 is linear") {
  const ComplexSpectrum s1 = rfft2(random_tensor(Shape{1, 2, 8, 6}, 1));
  const ComplexSpectrum s2 = rfft2(random_tensor(Shape{1, 2, 8, 6}, 2));
  const Real a = 0.3, b = -1.7;
  const ComplexSpectrum mix{add(scale(s1.re, a), scale(s2.re, b)), add(scale(s1.im, a), scale(s2.im, b)), 6};
  const Tensor expect = add(scale(irfft2(s1), a), scale(irfft2(s2), b));
  CHECK(max_abs_diff(irfft2(mix), expect) <= 1e-12);
}

TEST_CASE("Parseval identity with half-plane column weights") {
  for (const int w : {6, 7}) {
    const Tensor x = random_tensor(Shape{1, 1, 5, w}, 3);
    const ComplexSpectrum s = rfft2(x);
    double energy = 0, spectral = 0;
    for (Real v : x.data()) energy += v * v;
    const int wf = half_width(w);
    for (int i = 0; i < 5 * wf; ++i) {
      const int v = i % wf;
      const double weight = (v == 0 || (w % 2 == 0 && v == w / 2)) ? 1 : 2;
      spectral += weight * (std::pow(s.re.data()[static_cast<std::size_t>(i)], 2) + std::pow(s.im.data()[static_cast<std::size_t>(i)], 2));
    }
    CHECK(std::abs(spectral / (5 * w) - energy) <= 1e-6 * energy);
  }
}

TEST_CASE("cir and icir") {
  const ComplexSpectrum s{random_tensor(Shape{2, 3, 4, 3}, 4), random_tensor(Shape{2, 3, 4, 3}, 5), 4};
  const Tensor packed = cir(s);
  CHECK(packed.shape() == Shape{2, 6, 4, 3});
  const ComplexSpectrum back = icir(packed, 4);
  CHECK(test::bitwise_equal(back.re, s.re));
  CHECK(test::bitwise_equal(back.im, s.im));

  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  std::vector<double> all = test::values(s.re);
  for (double v : test::values(s.im)) all.push_back(v);
  CHECK(sorted(test::values(packed)) == sorted(all));

  const Tensor real_only = cir({s.re, Tensor::zeros(s.re.shape()), 4});
  CHECK(test::max_abs(slice_channels(real_only, 3, 3)) == 0);
  CHECK(test::bitwise_equal(rfft2_packed(random_tensor(Shape{1, 2, 4, 4}, 6)), cir(rfft2(random_tensor(Shape{1, 2, 4, 4}, 6)))));
}

TEST_CASE("distance ordering of the 4x3 grid") {
  const SpectralOrdering ord = build_ordering(4, 3);
  const std::vector<std::pair<int, int>> expect{{0, 0}, {0, 1}, {1, 0}, {3, 0}, {1, 1}, {3, 1},
                                                {0, 2}, {2, 0}, {1, 2}, {2, 1}, {3, 2}, {2, 2}};
  for (std::size_t t = 0; t < expect.size(); ++t) CHECK(ord.perm[t] == expect[t].first * 3 + expect[t].second);
  for (int i = 0; i < ord.length(); ++i) CHECK(ord.inv_perm[static_cast<std::size_t>(ord.perm[static_cast<std::size_t>(i)])] == i);
}

TEST_CASE("orderings agree with the enumeration oracle") {
  for (int h = 1; h <= 12; ++h)
    for (int wf = 1; wf <= 9; ++wf) CHECK(build_ordering(h, wf).perm == oracle::ordering(h, wf));
  const SpectralOrdering rm = build_row_major_ordering(3, 2);
  CHECK(rm.perm == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS(build_ordering(0, 3));
}

TEST_CASE("ordering cache returns one shared instance per key") {
  const auto a = cached_ordering(SeqOrder::distance, 8, 5);
  const auto b = cached_ordering(SeqOrder::distance, 8, 5);
  const auto c = cached_ordering(SeqOrder::row_major, 8, 5);
  CHECK(a.get() == b.get());
  CHECK(a.get() != c.get());
  CHECK(a->perm == build_ordering(8, 5).perm);
}

TEST_CASE("seq and iseq") {
  const SpectralOrdering ord = build_ordering(6, 4);
  const Tensor x = random_tensor(Shape{2, 4, 6, 4}, 7);
  const Tensor s = seq(x, ord);
  CHECK(s.shape() == Shape{2, 4, 1, 24});
  CHECK(test::bitwise_equal(iseq(s, ord), x));
  for (int t = 0; t < 24; ++t) {
    const int g = ord.perm[static_cast<std::size_t>(t)];
    CHECK(s.at(1, 2, 0, t) == x.at(1, 2, g / 4, g % 4));
  }
  const Tensor c = seq(Tensor::full(Shape{1, 2, 6, 4}, 3), ord);
  for (Real v : c.data()) CHECK(v == 3);
  CHECK_THROWS(seq(random_tensor(Shape{1, 1, 5, 4}, 8), ord));
}

TEST_CASE("spectral gradients match finite differences") {
  const Tensor x = random_tensor(Shape{2, 2, 6, 5}, 9, -1, 1, true);
  const Tensor y = random_tensor(Shape{1, 2, 4, 8}, 10, -1, 1, true);
  CHECK(verify::grad_check([&] { return random_projection(rfft2_packed(x), 1); }, {{"x", x}}, 20, 1).max_rel_err <= 1e-6);
  CHECK(verify::grad_check([&] { return random_projection(rfft2_packed(y), 2); }, {{"y", y}}, 20, 2).max_rel_err <= 1e-6);
  const Tensor spec = random_tensor(Shape{2, 4, 6, 3}, 11, -1, 1, true);
  for (const int w : {4, 5}) {
    CHECK(verify::grad_check([&] { return random_projection(irfft2_packed(spec, w), 3); }, {{"s", spec}}, 20, 3)
              .max_rel_err <= 1e-6);
  }
  const SpectralOrdering ord = build_ordering(6, 3);
  CHECK(verify::grad_check([&] { return random_projection(iseq(seq(spec, ord), ord), 4); }, {{"s", spec}}, 20, 4)
            .max_rel_err <= 1e-9);
}

}  // TEST_SUITE
