#include <chrono>
#include <cmath>

#include "doctest.h"
#include "frwkv/wkv.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;
using frwkv::test::tensor;
using frwkv::verify::random_tensor;

namespace {

WkvParams params(std::initializer_list<double> w, std::initializer_list<double> u) {
  return {tensor(Shape{static_cast<int>(w.size())}, w), tensor(Shape{static_cast<int>(u.size())}, u)};
}

double rel_err(const Tensor& got, const Tensor& want) { return max_abs_diff(got, want) / test::max_abs(want); }

}  // namespace

TEST_SUITE("wkv") {

TEST_CASE("uniform weights average the values") {
  const Tensor v = tensor(Shape{1, 2}, {2, 6});
  const WkvParams p = params({0}, {0});
  for (const Tensor& out : {bi_wkv_oracle(Tensor::zeros(Shape{1, 2}), v, p), bi_wkv_scan(Tensor::zeros(Shape{1, 2}), v, p)}) {
    CHECK(out.data()[0] == doctest::Approx(4));
    CHECK(out.data()[1] == doctest::Approx(4));
  }
}

TEST_CASE("a dominant self bonus returns the token's own value") {
  const Tensor k = random_tensor(Shape{2, 9}, 1);
  const Tensor v = random_tensor(Shape{2, 9}, 2);
  const Tensor out = bi_wkv_scan(k, v, params({0.3, -0.2}, {50, 50}));
  CHECK(max_abs_diff(out, v) <= 1e-6);
}

TEST_CASE("constant values are a fixed point") {
  const Tensor k = random_tensor(Shape{3, 17}, 3, -5, 5);
  const Tensor out = bi_wkv_scan(k, Tensor::full(Shape{3, 17}, 0.4), params({1, -2, 0.5}, {-1, 3, 0}));
  for (Real x : out.data()) CHECK(x == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("a single token yields its value exactly") {
  const Tensor v = tensor(Shape{2, 1}, {0.3, -7});
  CHECK(test::bitwise_equal(bi_wkv_scan(tensor(Shape{2, 1}, {4, -2}), v, params({1, 2}, {0.5, 0})), v));
}

TEST_CASE("scan matches the library and verification oracles") {
  const Tensor k = random_tensor(Shape{4, 32}, 4, -3, 3);
  const Tensor v = random_tensor(Shape{4, 32}, 5);
  const WkvParams p{random_tensor(Shape{4}, 6, -2, 2), random_tensor(Shape{4}, 7, -2, 2)};
  const Tensor ref = oracle::bi_wkv(k, v, p.w_raw, p.u);
  CHECK(rel_err(bi_wkv_oracle(k, v, p), ref) <= 1e-12);
  CHECK(rel_err(bi_wkv_scan(k, v, p), ref) <= 1e-5);
}

TEST_CASE("extreme keys stay finite") {
  std::vector<Real> kd(40, 0);
  kd[13] = 40;
  const Tensor k = Tensor::from_data(Shape{2, 20}, kd);
  const Tensor v = random_tensor(Shape{2, 20}, 8);
  const WkvParams p = params({0.5, -1}, {0.2, 0});
  const Tensor out = bi_wkv_scan(k, v, p);
  for (Real x : out.data()) CHECK(std::isfinite(x));
  CHECK(rel_err(out, oracle::bi_wkv(k, v, p.w_raw, p.u)) <= 1e-4);
}

TEST_CASE("batched input matches per-sample evaluation") {
  const Tensor k = random_tensor(Shape{2, 3, 1, 10}, 9);
  const Tensor v = random_tensor(Shape{2, 3, 1, 10}, 10);
  const WkvParams p{random_tensor(Shape{3}, 11), random_tensor(Shape{3}, 12)};
  const Tensor out = bi_wkv_scan(k, v, p);
  CHECK(out.shape() == k.shape());
  for (int n = 0; n < 2; ++n) {
    auto part = [&](const Tensor& t) {
      return Tensor::from_data(Shape{3, 10}, {t.data().begin() + n * 30, t.data().begin() + (n + 1) * 30});
    };
    const Tensor one = bi_wkv_scan(part(k), part(v), p);
    CHECK(test::bitwise_equal(one, part(out)));
  }
}

TEST_CASE("outputs stay within the value range") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const int t = 1 + static_cast<int>(rng.next_u64() % 40);
    const Tensor k = random_tensor(Shape{1, t}, rng.next_u64(), -6, 6);
    const Tensor v = random_tensor(Shape{1, t}, rng.next_u64());
    const Tensor out = bi_wkv_scan(k, v, params({rng.uniform(-3, 3)}, {rng.uniform(-3, 3)}));
    const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
    for (Real x : out.data()) {
      CHECK(x >= *lo - 1e-12);
      CHECK(x <= *hi + 1e-12);
    }
  }
}

TEST_CASE("without decay the output ignores the order of other tokens") {
  // w = exp(w_raw) = 1e-300 makes every distance weight e^0.
  const int t = 7;
  const Tensor k = random_tensor(Shape{1, t}, 14);
  const Tensor v = random_tensor(Shape{1, t}, 15);
  const WkvParams p = params({-690}, {0.7});
  const Tensor out = bi_wkv_scan(k, v, p);
  const std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
  std::vector<Real> kp(t), vp(t);
  for (int i = 0; i < t; ++i) {
    kp[static_cast<std::size_t>(i)] = k.data()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    vp[static_cast<std::size_t>(i)] = v.data()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const Tensor outp = bi_wkv_scan(Tensor::from_data(Shape{1, t}, kp), Tensor::from_data(Shape{1, t}, vp), p);
  for (int i = 0; i < t; ++i) {
    CHECK(outp.data()[static_cast<std::size_t>(i)] ==
          doctest::Approx(out.data()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]).epsilon(1e-12));
  }
}

TEST_CASE("gradients of all four inputs match finite differences") {
  const Tensor k = random_tensor(Shape{3, 12}, 16, -2, 2, true);
  const Tensor v = random_tensor(Shape{3, 12}, 17, -1, 1, true);
  const WkvParams p{random_tensor(Shape{3}, 18, -1, 1, true), random_tensor(Shape{3}, 19, -1, 1, true)};
  const auto r = verify::grad_check([&] { return verify::random_projection(bi_wkv_scan(k, v, p), 20); },
                                    {{"k", k}, {"v", v}, {"w_raw", p.w_raw}, {"u", p.u}}, 40, 21);
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("scan time grows about linearly with length") {
  auto best = [](int t) {
    const Tensor k = random_tensor(Shape{8, t}, 22);
    const Tensor v = random_tensor(Shape{8, t}, 23);
    const WkvParams p{Tensor::zeros(Shape{8}), Tensor::zeros(Shape{8})};
    double b = INFINITY;
    for (int rep = 0; rep < 5; ++rep) {
      const auto s = std::chrono::steady_clock::now();
      bi_wkv_scan(k, v, p);
      b = std::min(b, std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count());
    }
    return b;
  };
  best(1 << 15);
  CHECK(best(1 << 16) / best(1 << 15) <= 2.6);
}

}  // TEST_SUITE
