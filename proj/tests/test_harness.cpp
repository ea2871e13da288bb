#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "frwkv/harness.hpp"
#include "frwkv/ops.hpp"
#include "test_util.hpp"

using namespace frwkv;
using frwkv::test::max_abs_diff;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  std::vector<Real> v(static_cast<std::size_t>(shape.numel()));
  for (Real& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor::from_data(shape, std::move(v));
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("frwkv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Direct loops over the half-plane DFT in double precision.
double loss_reference(const Tensor& p, const Tensor& g, double lambda) {
  const Shape& s = p.shape();
  const int H = s.h(), W = s.w(), Wf = W / 2 + 1;
  double l1 = 0;
  for (std::size_t i = 0; i < p.data().size(); ++i) l1 += std::abs(double(p.data()[i]) - double(g.data()[i]));
  l1 /= static_cast<double>(p.numel());
  double spec = 0;
  for (int n = 0; n < s.n(); ++n)
    for (int c = 0; c < s.c(); ++c)
      for (int u = 0; u < H; ++u)
        for (int v = 0; v < Wf; ++v) {
          double re = 0, im = 0;
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
              const double d = double(p.at(n, c, h, w)) - double(g.at(n, c, h, w));
              const double ang = -2 * std::numbers::pi * (double(u * h) / H + double(v * w) / W);
              re += d * std::cos(ang);
              im += d * std::sin(ang);
            }
          spec += std::abs(re) + std::abs(im);
        }
  spec /= 2.0 * s.n() * s.c() * H * Wf;
  return l1 + lambda * spec;
}

Tensor add_noise(const Tensor& x, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (Real& v : out) v = static_cast<Real>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
  return Tensor::from_data(x.shape(), std::move(out));
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.stage_depths = {1, 1, 1};
  m.base_channels = 4;
  m.gamma = 2;
  return m;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("haze model limits") {
  const Tensor clean = random_tensor(Shape{1, 3, 6, 6}, 1, 0, 1);
  const Tensor depth = random_tensor(Shape{1, 1, 6, 6}, 2, 0, 1);
  CHECK(max_abs_diff(apply_haze(clean, depth, 1e-6, 0.8), clean) <= 1e-5);
  const Tensor opaque = apply_haze(clean, Tensor::full(depth.shape(), 1), 200, 0.8);
  for (Real v : opaque.data()) CHECK(v == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("synthetic data is deterministic and in range") {
  const auto a = synth_dataset(3, 16, 24, 9);
  const auto b = synth_dataset(3, 16, 24, 9);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(test::bitwise_equal(a[i].hazy, b[i].hazy));
    CHECK(test::bitwise_equal(a[i].clean, b[i].clean));
    CHECK(a[i].beta >= 0.6);
    CHECK(a[i].beta <= 1.8);
    CHECK(a[i].airlight >= 0.7);
    CHECK(a[i].airlight <= 1.0);
    CHECK(a[i].clean.shape() == Shape{1, 3, 16, 24});
    for (Real v : a[i].hazy.data()) CHECK((v >= 0 && v <= 1));
  }
  CHECK_FALSE(test::bitwise_equal(synth_dataset(1, 16, 24, 10)[0].clean, a[0].clean));
}

TEST_CASE("dual-domain loss") {
  const Tensor p = random_tensor(Shape{2, 3, 4, 6}, 3, 0, 1);
  const Tensor g = random_tensor(Shape{2, 3, 4, 6}, 4, 0, 1);
  CHECK(dual_domain_loss(g, g).item() == 0);
  const Tensor shifted = add_scalar(g, Real(0.1));
  CHECK(dual_domain_loss(shifted, g, 0).item() == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(dual_domain_loss(p, g, 0.15f).item() == doctest::Approx(loss_reference(p, g, 0.15)).epsilon(1e-4));
  CHECK(dual_domain_loss(p, g, 0.7f).item() == doctest::Approx(loss_reference(p, g, 0.7)).epsilon(1e-4));
  CHECK(dual_domain_loss(p, g).item() >= 0);
  CHECK_THROWS(dual_domain_loss(p, random_tensor(Shape{2, 3, 4, 4}, 5)));
}

TEST_CASE("psnr") {
  const Tensor g = random_tensor(Shape{1, 3, 8, 8}, 6, 0.2, 0.8);
  CHECK(psnr(g, g) == 100);
  CHECK(psnr(add_scalar(g, Real(0.1)), g) == doctest::Approx(20).epsilon(1e-4));
}

TEST_CASE("ssim") {
  const Tensor g = synth_dataset(1, 32, 32, 7)[0].clean;
  CHECK(ssim(g, g) == doctest::Approx(1).epsilon(1e-9));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    double last_ssim = 1.0, last_psnr = 100.0;
    for (const double sigma : {0.01, 0.05, 0.1}) {
      const Tensor noisy = add_noise(g, sigma, seed);
      const double s = ssim(noisy, g);
      const double p = psnr(noisy, g);
      CHECK(s <= last_ssim);
      CHECK(p <= last_psnr);
      last_ssim = s;
      last_psnr = p;
    }
  }
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(std::abs(cosine_lr(0, 100, 2e-4, 1e-6) - 2e-4) <= 1e-9);
  CHECK(std::abs(cosine_lr(99, 100, 2e-4, 1e-6) - 1e-6) <= 1e-9);
  CHECK(cosine_lr(50, 101, 2e-4, 0) == doctest::Approx(1e-4));
  for (int s = 1; s < 100; ++s) CHECK(cosine_lr(s, 100, 1, 0) <= cosine_lr(s - 1, 100, 1, 0));
}

TEST_CASE("adam leaves parameters without gradient in place") {
  ParameterStore st(1);
  const Tensor a = st.add("a", Shape{4}, Init::uniform(1.0));
  const Tensor b = st.add("b", Shape{4}, Init::uniform(1.0));
  const std::vector<Real> b0(b.data().begin(), b.data().end());
  const std::vector<Real> a0(a.data().begin(), a.data().end());
  Adam adam(st, 0.9, 0.999);
  {
    Tape tape;
    tape.backward(sum(mul(a, a)));
  }
  adam.step(1e-2);
  CHECK(std::equal(b0.begin(), b0.end(), b.data().begin()));
  // The first bias-corrected step moves each entry by lr against its gradient sign.
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.data()[i] == doctest::Approx(a0[i] - 1e-2 * (a0[i] > 0 ? 1 : -1)).epsilon(1e-4));
  }
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("training config parsing") {
  const TrainConfig c = parse_train_config("# comment\nlr0 = 1e-3\nsteps=20\nbase_channels = 8\naugment = false\n");
  CHECK(c.lr0 == 1e-3);
  CHECK(c.steps == 20);
  CHECK(c.model.base_channels == 8);
  CHECK_FALSE(c.augment);
  CHECK_THROWS(parse_train_config("learning_rate = 1\n"));
  CHECK_THROWS(parse_train_config("steps = -1\n"));
  CHECK_THROWS(parse_train_config("lr0\n"));
  CHECK_THROWS(parse_train_config("lr_min = 1\nlr0 = 0.1\n"));
}

TEST_CASE("ppm files round-trip at 8 bits") {
  const auto dir = scratch_dir("ppm");
  const Tensor img = random_tensor(Shape{1, 3, 5, 7}, 9, -0.2, 1.2);
  write_ppm(dir / "a.ppm", img);
  const Tensor back = read_ppm(dir / "a.ppm");
  CHECK(test::bitwise_equal(back, quantize_8bit(img)));
  write_ppm(dir / "b.ppm", back);
  CHECK(test::bitwise_equal(read_ppm(dir / "b.ppm"), back));
  CHECK_THROWS(read_ppm(dir / "missing.ppm"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset directories round-trip") {
  const auto dir = scratch_dir("data");
  const auto data = synth_dataset(2, 8, 16, 3);
  write_dataset(dir, data, 3);
  const auto back = read_dataset(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(test::bitwise_equal(back[i].clean, quantize_8bit(data[i].clean)));
    CHECK(test::bitwise_equal(back[i].hazy, quantize_8bit(data[i].hazy)));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("short training runs are reproducible and reduce the loss") {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.steps = 12;
  cfg.batch = 2;
  cfg.patch = 16;
  cfg.lr0 = 2e-3;
  cfg.seed = 4;
  const auto data = synth_dataset(2, 24, 24, 5);
  int checkpoints = 0;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const FourierRwkvModel&, int) { ++checkpoints; };
  const auto a = train(data, cfg, hooks);
  const auto b = train(data, cfg);
  CHECK(serialize_checkpoint(a.model) == serialize_checkpoint(b.model));
  REQUIRE(a.log.size() == 12);
  CHECK(a.log.back().loss < a.log.front().loss);
  CHECK(checkpoints >= 1);
  const Tensor out = dehaze(a.model, data[0].hazy);
  CHECK(out.shape() == data[0].hazy.shape());
}

}  // TEST_SUITE
