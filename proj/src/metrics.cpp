#include <algorithm>
#include <cmath>

#include "frwkv/harness.hpp"
#include "frwkv/ops.hpp"
#include "frwkv/spectral.hpp"

FRWKV_BEGIN_NAMESPACE

Tensor dual_domain_loss(const Tensor& pred, const Tensor& gt, Real lambda) {
  if (pred.shape() != gt.shape()) {
    throw std::invalid_argument("dual_domain_loss: shapes differ " + pred.shape().str() + " vs " + gt.shape().str());
  }
  const Tensor spatial = mean(abs(sub(pred, gt)));
  if (lambda == Real(0)) return spatial;
  const Tensor spectral = mean(abs(sub(rfft2_packed(pred), rfft2_packed(gt))));
  return add(spatial, scale(spectral, lambda));
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shapes differ");
  double se = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.numel());
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable Gaussian filter over the valid region.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g) {
  const int oh = h - kWindow + 1;
  const int ow = w - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y * w + x + k)];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>((y + k) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 4) throw std::invalid_argument("ssim: expected equal N,C,H,W shapes");
  const Shape& s = a.shape();
  if (s.h() < kWindow || s.w() < kWindow) throw std::invalid_argument("ssim: images must be at least 11x11");
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const auto g = gaussian_taps();
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  double total = 0;
  int planes = 0;
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  for (int p = 0; p < s.n() * s.c(); ++p) {
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a.data()[static_cast<std::size_t>(p) * plane + i];
      y[i] = b.data()[static_cast<std::size_t>(p) * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, s.h(), s.w(), g);
    const auto my = filter_valid(y, s.h(), s.w(), g);
    const auto sxx = filter_valid(xx, s.h(), s.w(), g);
    const auto syy = filter_valid(yy, s.h(), s.w(), g);
    const auto sxy = filter_valid(xy, s.h(), s.w(), g);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
    ++planes;
  }
  return total / planes;
}

FRWKV_END_NAMESPACE
