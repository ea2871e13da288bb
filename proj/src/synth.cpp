#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "frwkv/harness.hpp"

FRWKV_BEGIN_NAMESPACE

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Sum of a few random low-frequency plane waves, rescaled to [0,1].
std::vector<double> smooth_field(Rng& rng, int h, int w, int waves, double max_cycles) {
  std::vector<double> f(static_cast<std::size_t>(h) * w, 0.0);
  for (int k = 0; k < waves; ++k) {
    const double fy = rng.uniform(-max_cycles, max_cycles) / h;
    const double fx = rng.uniform(-max_cycles, max_cycles) / w;
    const double phase = rng.uniform(0.0, kTwoPi);
    const double amp = rng.uniform(0.3, 1.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(y * w + x)] += amp * std::cos(kTwoPi * (fy * y + fx * x) + phase);
    }
  }
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double range = std::max(*hi - *lo, 1e-12);
  const double base = *lo;
  for (double& v : f) v = (v - base) / range;
  return f;
}

Tensor clean_image(Rng& rng, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<Real> img(3 * plane);
  // Linear color gradient.
  const double angle = rng.uniform(0.0, kTwoPi);
  const double gy = std::sin(angle);
  const double gx = std::cos(angle);
  double c0[3];
  double c1[3];
  double ca[3];
  double cb[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.0, 1.0);
    c1[c] = rng.uniform(0.0, 1.0);
    ca[c] = rng.uniform(0.0, 1.0);
    cb[c] = rng.uniform(0.0, 1.0);
  }
  // Checkerboard.
  const int period = 4 + static_cast<int>(rng.uniform(0.0, 12.0));
  // Weights of gradient, checkerboard and texture.
  double wg = rng.uniform(0.2, 1.0);
  double wc = rng.uniform(0.0, 0.6);
  double wt = rng.uniform(0.2, 1.0);
  const double total = wg + wc + wt;
  wg /= total;
  wc /= total;
  wt /= total;
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> texture = smooth_field(rng, h, w, 6, 4.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = 0.5 + 0.5 * (gy * (2.0 * y / std::max(h - 1, 1) - 1.0) + gx * (2.0 * x / std::max(w - 1, 1) - 1.0)) / std::numbers::sqrt2;
        const double grad = c0[c] * (1.0 - s) + c1[c] * s;
        const double check = ((y / period + x / period) % 2 == 0) ? ca[c] : cb[c];
        const std::size_t i = static_cast<std::size_t>(y * w + x);
        const double v = wg * grad + wc * check + wt * texture[i];
        img[static_cast<std::size_t>(c) * plane + i] = static_cast<Real>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return Tensor::from_data(Shape{1, 3, h, w}, std::move(img));
}

}  // namespace

Tensor apply_haze(const Tensor& clean, const Tensor& depth, double beta, double airlight) {
  const Shape& s = clean.shape();
  if (s.rank() != 4 || depth.rank() != 4 || depth.shape().c() != 1 || depth.shape().h() != s.h() ||
      depth.shape().w() != s.w() || depth.shape().n() != s.n()) {
    throw std::invalid_argument("apply_haze: depth " + depth.shape().str() + " does not match image " + s.str());
  }
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  std::vector<Real> out(static_cast<std::size_t>(clean.numel()));
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double t = std::exp(-beta * depth.data()[static_cast<std::size_t>(n) * plane + p]);
        const std::size_t i = (static_cast<std::size_t>(n) * s.c() + static_cast<std::size_t>(c)) * plane + p;
        out[i] = static_cast<Real>(std::clamp(clean.data()[i] * t + airlight * (1.0 - t), 0.0, 1.0));
      }
    }
  }
  return Tensor::from_data(s, std::move(out));
}

std::vector<HazeSample> synth_dataset(int count, int height, int width, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("synth_dataset: negative count");
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw std::invalid_argument("synth_dataset: height and width must be positive multiples of 8");
  }
  std::vector<HazeSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "synth/" + std::to_string(i)));
    HazeSample s;
    s.clean = clean_image(rng, height, width);
    std::vector<double> d = smooth_field(rng, height, width, 3, 1.5);
    std::vector<Real> depth(d.begin(), d.end());
    s.depth = Tensor::from_data(Shape{1, 1, height, width}, std::move(depth));
    s.beta = rng.uniform(0.6, 1.8);
    s.airlight = rng.uniform(0.7, 1.0);
    s.hazy = apply_haze(s.clean, s.depth, s.beta, s.airlight);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string indexed(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.ppm", stem, i);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<HazeSample>& samples, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "meta.txt", std::ios::trunc);
  if (!meta) throw std::runtime_error("dataset: cannot write " + (dir / "meta.txt").string());
  meta << "# seed " << seed << "\n# index beta airlight\n";
  meta.precision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_ppm(dir / indexed("clean", i), samples[i].clean);
    write_ppm(dir / indexed("hazy", i), samples[i].hazy);
    meta << i << " " << samples[i].beta << " " << samples[i].airlight << "\n";
  }
}

std::vector<HazeSample> read_dataset(const std::filesystem::path& dir) {
  std::vector<HazeSample> out;
  for (std::size_t i = 0;; ++i) {
    const auto hazy = dir / indexed("hazy", i);
    const auto clean = dir / indexed("clean", i);
    if (!std::filesystem::exists(hazy) || !std::filesystem::exists(clean)) break;
    HazeSample s;
    s.hazy = read_ppm(hazy);
    s.clean = read_ppm(clean);
    if (s.hazy.shape() != s.clean.shape()) throw std::runtime_error("dataset: size mismatch at index " + std::to_string(i));
    out.push_back(std::move(s));
  }
  std::ifstream meta(dir / "meta.txt");
  std::string line;
  while (meta && std::getline(meta, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t i = 0;
    double beta = 0;
    double a = 0;
    if ((ls >> i >> beta >> a) && i < out.size()) {
      out[i].beta = beta;
      out[i].airlight = a;
    }
  }
  if (out.empty()) throw std::runtime_error("dataset: no hazy_0000.ppm / clean_0000.ppm pairs in " + dir.string());
  return out;
}

FRWKV_END_NAMESPACE
