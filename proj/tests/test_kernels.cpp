#include <omp.h>

#include <cmath>
#include <vector>

#include "doctest.h"
#include "frwkv/kernels.hpp"
#include "frwkv/params.hpp"

using namespace frwkv;
namespace k = frwkv::kernels;

namespace {

std::vector<Real> noise(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  std::vector<Real> v(n);
  for (Real& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  return v;
}

double rel_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(double(a[i]) - double(b[i])));
    den = std::max(den, std::abs(double(b[i])));
  }
  return num / std::max(den, 1e-300);
}

// Runs fn under 1 and 3 threads and checks both runs agree bit for bit.
template <class Fn>
void check_thread_independent(Fn fn) {
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = fn();
  omp_set_num_threads(3);
  const auto three = fn();
  omp_set_num_threads(before);
  CHECK(one == three);
}

k::ConvGeometry geometry(bool depthwise, int kernel, int stride, Padding pad) {
  k::ConvGeometry g;
  g.batch = 2;
  g.in_ch = depthwise ? 5 : 3;
  g.out_ch = 5;
  g.height = 9;
  g.width = 7;
  g.kernel = kernel;
  g.stride = stride;
  g.depthwise = depthwise;
  g.padding = pad;
  return g;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("convolution matches the serial reference") {
  for (const bool dw : {false, true})
    for (const int kernel : {1, 3, 5})
      for (const int stride : {1, 2})
        for (const Padding pad : {Padding::replicate, Padding::zero}) {
          if (dw && stride != 1) continue;
          const auto g = geometry(dw, kernel, stride, pad);
          const std::size_t nx = std::size_t(g.batch) * g.in_ch * g.height * g.width;
          const std::size_t nw = std::size_t(g.out_ch) * (dw ? 1 : g.in_ch) * kernel * kernel;
          const std::size_t ny = std::size_t(g.batch) * g.out_ch * g.out_height() * g.out_width();
          const auto x = noise(nx, 1), w = noise(nw, 2), b = noise(std::size_t(g.out_ch), 3), gy = noise(ny, 4);

          std::vector<Real> y(ny), ys(ny);
          k::conv2d_forward(g, x, w, b, y);
          k::serial::conv2d_forward(g, x, w, b, ys);
          CHECK(rel_diff(y, ys) <= 1e-13);

          std::vector<Real> dx(nx), dw_(nw), db(b.size()), dxs(nx), dws(nw), dbs(b.size());
          k::conv2d_backward(g, x, w, gy, dx, dw_, db);
          k::serial::conv2d_backward(g, x, w, gy, dxs, dws, dbs);
          CHECK(rel_diff(dx, dxs) <= 1e-13);
          CHECK(rel_diff(dw_, dws) <= 1e-13);
          CHECK(rel_diff(db, dbs) <= 1e-13);

          check_thread_independent([&] {
            std::vector<Real> o(ny), gx(nx), gw(nw), gb(b.size());
            k::conv2d_forward(g, x, w, b, o);
            k::conv2d_backward(g, x, w, gy, gx, gw, gb);
            o.insert(o.end(), gx.begin(), gx.end());
            o.insert(o.end(), gw.begin(), gw.end());
            o.insert(o.end(), gb.begin(), gb.end());
            return o;
          });
        }
}

TEST_CASE("bilinear sampling matches the serial reference") {
  k::SampleGeometry g{2, 8, 6, 5, 4};
  const std::size_t nx = 2 * 8 * 6 * 5;
  const std::size_t nc = 2 * 8 * 6 * 5;
  const auto x = noise(nx, 5);
  const auto coords = noise(nc, 6, -2, 8);
  const auto gy = noise(nx, 7);
  std::vector<Real> y(nx), ys(nx);
  k::bilinear_forward(g, x, coords, y);
  k::serial::bilinear_forward(g, x, coords, ys);
  CHECK(rel_diff(y, ys) <= 1e-14);
  std::vector<Real> dx(nx), dc(nc), dxs(nx), dcs(nc);
  k::bilinear_backward(g, x, coords, gy, dx, dc);
  k::serial::bilinear_backward(g, x, coords, gy, dxs, dcs);
  CHECK(rel_diff(dx, dxs) <= 1e-14);
  CHECK(rel_diff(dc, dcs) <= 1e-14);
  check_thread_independent([&] {
    std::vector<Real> o(nx), gx(nx), gc(nc);
    k::bilinear_forward(g, x, coords, o);
    k::bilinear_backward(g, x, coords, gy, gx, gc);
    o.insert(o.end(), gx.begin(), gx.end());
    o.insert(o.end(), gc.begin(), gc.end());
    return o;
  });
}

TEST_CASE("2d real fft matches the serial reference") {
  for (const auto& [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{7, 5}, std::pair{16, 1}}) {
    const int planes = 3;
    const std::size_t half = std::size_t(planes) * h * (w / 2 + 1);
    const auto x = noise(std::size_t(planes) * h * w, 8);
    std::vector<Real> re(half), im(half), res(half), ims(half);
    k::rfft2_planes(planes, h, w, x, re, im);
    k::serial::rfft2_planes(planes, h, w, x, res, ims);
    CHECK(rel_diff(re, res) <= 1e-13);
    CHECK(rel_diff(im, ims) <= 1e-13);
    std::vector<Real> back(x.size());
    k::irfft2_planes(planes, h, w, re, im, back);
    CHECK(rel_diff(back, x) <= 1e-13);
    check_thread_independent([&] {
      std::vector<Real> a(half), b(half);
      k::rfft2_planes(planes, h, w, x, a, b);
      a.insert(a.end(), b.begin(), b.end());
      return a;
    });
  }
}

TEST_CASE("wkv scan matches the serial reference") {
  const k::WkvGeometry g{2, 4, 37};
  const std::size_t n = 2 * 4 * 37;
  const auto kk = noise(n, 9, -3, 3), v = noise(n, 10), w = noise(4, 11, -2, 1), u = noise(4, 12);
  std::vector<Real> out(n), outs(n), log_den(n);
  k::wkv_forward(g, kk, v, w, u, out, log_den);
  k::serial::wkv_forward(g, kk, v, w, u, outs);
  CHECK(rel_diff(out, outs) <= 1e-12);
  check_thread_independent([&] {
    std::vector<Real> o(n), l(n);
    k::wkv_forward(g, kk, v, w, u, o, l);
    return o;
  });
}

}  // TEST_SUITE
