#include <cmath>

#include "doctest.h"
#include "frwkv/nn.hpp"
#include "frwkv/ops.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;
using frwkv::test::tensor;
using frwkv::test::values;
using frwkv::verify::random_tensor;

TEST_SUITE("tensor-autodiff") {

TEST_CASE("elementwise product of small vectors") {
  CHECK(values(mul(tensor(Shape{2}, {1, 2}), tensor(Shape{2}, {3, 4}))) == std::vector<double>{3, 8});
  const Tensor x = random_tensor(Shape{2, 3, 4, 4}, 1);
  CHECK(test::bitwise_equal(mul(x, Tensor::full(x.shape(), 1)), x));
}

TEST_CASE("elementwise ops match scalar loops") {
  const Tensor a = random_tensor(Shape{2, 3, 4, 4}, 2);
  const Tensor b = random_tensor(Shape{2, 3, 4, 4}, 3, 0.5, 2);
  const Tensor s = add(a, b), d = sub(a, b), m = mul(a, b), q = div(a, b);
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    CHECK(s.data()[i] == a.data()[i] + b.data()[i]);
    CHECK(d.data()[i] == a.data()[i] - b.data()[i]);
    CHECK(m.data()[i] == a.data()[i] * b.data()[i]);
    CHECK(q.data()[i] == a.data()[i] / b.data()[i]);
  }
}

TEST_CASE("per-channel broadcast") {
  const Tensor a = random_tensor(Shape{2, 3, 2, 2}, 4);
  const Tensor v = tensor(Shape{3}, {1, 10, 100});
  const Tensor out = add(a, v);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) CHECK(out.at(n, c, h, w) == a.at(n, c, h, w) + v.data()[static_cast<std::size_t>(c)]);
  CHECK_THROWS(add(a, Tensor::zeros(Shape{4})));
}

TEST_CASE("division rejects zero divisors") { CHECK_THROWS(div(tensor(Shape{2}, {1, 1}), tensor(Shape{2}, {1, 0}))); }

TEST_CASE("matmul examples and loop oracle") {
  CHECK(values(matmul(tensor(Shape{1, 2}, {1, 2}), tensor(Shape{2, 1}, {3, 4}))) == std::vector<double>{11});
  const Tensor a = random_tensor(Shape{3, 3}, 5);
  const Tensor eye = tensor(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(max_abs_diff(matmul(eye, a), a) == 0);

  const Tensor x = random_tensor(Shape{5, 7}, 6);
  const Tensor y = random_tensor(Shape{7, 3}, 7);
  const Tensor z = matmul(x, y);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) {
      double ref = 0;
      for (int k = 0; k < 7; ++k) ref += x.data()[static_cast<std::size_t>(i * 7 + k)] * y.data()[static_cast<std::size_t>(k * 3 + j)];
      CHECK(std::abs(z.data()[static_cast<std::size_t>(i * 3 + j)] - ref) <= 1e-12);
    }
  }
  CHECK_THROWS(matmul(x, x));
}

TEST_CASE("backward of sum(w*w) is 2w") {
  const Tensor w = Tensor::leaf(Shape{1}, {3});
  {
    Tape tape;
    tape.backward(sum(mul(w, w)));
  }
  CHECK(w.grad()[0] == 6);
}

TEST_CASE("unused parameters receive zero gradient") {
  const Tensor w = Tensor::leaf(Shape{2}, {1, 2});
  const Tensor unused = Tensor::leaf(Shape{2}, {5, 6});
  {
    Tape tape;
    tape.backward(sum(mul(w, w)));
  }
  CHECK(values(Tensor::from_data(Shape{2}, {unused.grad().begin(), unused.grad().end()})) == std::vector<double>{0, 0});
}

TEST_CASE("gradients accumulate across backward passes") {
  const Tensor w = Tensor::leaf(Shape{1}, {2});
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(scale(w, 3)));
  }
  CHECK(w.grad()[0] == 6);
  w.zero_grad();
  CHECK(w.grad()[0] == 0);
}

TEST_CASE("no tape, or NoGradGuard, records nothing") {
  const Tensor w = Tensor::leaf(Shape{2}, {1, 2});
  CHECK_FALSE(mul(w, w).requires_grad());
  Tape tape;
  CHECK(mul(w, w).requires_grad());
  const std::size_t before = tape.size();
  {
    autograd::NoGradGuard guard;
    CHECK_FALSE(mul(w, w).requires_grad());
  }
  CHECK(tape.size() == before);
}

TEST_CASE("backward is linear in the loss") {
  const Tensor w = random_tensor(Shape{1, 2, 3, 3}, 8, -1, 1, true);
  auto f = [&] { return sum(mul(sigmoid(w), w)); };
  auto g = [&] { return sum(squared_relu(w)); };
  auto grad_of = [&](const std::function<Tensor()>& loss) {
    w.zero_grad();
    {
      Tape tape;
      tape.backward(loss());
    }
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  const double a = 0.7, b = -1.3;
  const auto gf = grad_of(f), gg = grad_of(g);
  const auto combined = grad_of([&] { return add(scale(f(), a), scale(g(), b)); });
  for (std::size_t i = 0; i < gf.size(); ++i) CHECK(std::abs(combined[i] - (a * gf[i] + b * gg[i])) <= 1e-6);
}

TEST_CASE("identical op sequences give bitwise identical gradients") {
  auto run = [] {
    const Tensor w = random_tensor(Shape{1, 4, 5, 5}, 9, -1, 1, true);
    Tape tape;
    tape.backward(sum(mul(gelu(w), softmax(w, 1))));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("op gradients match finite differences") {
  const Tensor a = random_tensor(Shape{2, 3, 4, 5}, 10, -1, 1, true);
  const Tensor b = random_tensor(Shape{2, 3, 4, 5}, 11, 0.5, 1.5, true);
  const Tensor v = random_tensor(Shape{3}, 12, -1, 1, true);
  const Tensor m1 = random_tensor(Shape{2, 3, 4}, 13, -1, 1, true);
  const Tensor m2 = random_tensor(Shape{2, 4, 5}, 14, -1, 1, true);
  const Tensor lw = random_tensor(Shape{6, 5}, 15, -1, 1, true);
  const Tensor lb = random_tensor(Shape{6}, 16, -1, 1, true);
  const Tensor plane = random_tensor(Shape{2, 1, 4, 5}, 17, -1, 1, true);
  using verify::random_projection;
  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases{
      {"add", [&] { return random_projection(add(a, v), 1); }},
      {"sub", [&] { return random_projection(sub(a, b), 2); }},
      {"mul", [&] { return random_projection(mul(a, v), 3); }},
      {"div", [&] { return random_projection(div(a, b), 4); }},
      {"mul_planes", [&] { return random_projection(mul_planes(a, plane), 5); }},
      {"abs", [&] { return random_projection(abs(a), 6); }},
      {"matmul", [&] { return random_projection(matmul(m1, m2), 7); }},
      {"linear", [&] { return random_projection(linear(a, lw, lb), 8); }},
      {"mean", [&] { return mean(mul(a, b)); }},
      {"reshape", [&] { return random_projection(reshape(a, Shape{6, 20}), 9); }},
      {"concat_slice",
       [&] {
         const Tensor parts[] = {a, b};
         return random_projection(slice_channels(concat_channels(parts), 2, 3), 10);
       }},
      {"scale_add_scalar", [&] { return random_projection(add_scalar(scale(a, 2.5), 1), 11); }},
  };
  const std::vector<verify::GradProbe> probes{{"a", a}, {"b", b}, {"v", v}, {"m1", m1}, {"m2", m2},
                                              {"lw", lw}, {"lb", lb}, {"plane", plane}};
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    std::vector<verify::GradProbe> used;
    for (const auto& p : probes) {
      p.tensor.zero_grad();
    }
    {
      Tape tape;
      tape.backward(fn());
    }
    for (const auto& p : probes) {
      bool touched = false;
      for (Real g : p.tensor.grad()) touched = touched || g != 0;
      if (touched) used.push_back(p);
    }
    REQUIRE_FALSE(used.empty());
    const auto r = verify::grad_check(fn, used, 12, 99);
    CHECK(r.max_rel_err <= 1e-6);
  }
}

}  // TEST_SUITE
