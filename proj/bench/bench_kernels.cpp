// Parallel kernels against their serial references on training-sized inputs.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "frwkv/kernels.hpp"
#include "frwkv/params.hpp"
#include "frwkv/runtime.hpp"

using namespace frwkv;
namespace k = frwkv::kernels;

namespace {

std::vector<Real> noise(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  std::vector<Real> v(n);
  for (Real& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  return v;
}

k::ConvGeometry conv_geometry(const benchmark::State& state) {
  k::ConvGeometry g;
  g.batch = 4;
  g.in_ch = g.out_ch = static_cast<int>(state.range(0));
  g.height = g.width = static_cast<int>(state.range(1));
  g.kernel = 3;
  return g;
}

template <bool Serial>
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const std::size_t n = std::size_t(g.batch) * g.in_ch * g.height * g.width;
  const auto x = noise(n, 1), w = noise(std::size_t(g.out_ch) * g.in_ch * 9, 2), b = noise(std::size_t(g.out_ch), 3);
  std::vector<Real> y(n);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::conv2d_forward(g, x, w, b, y);
    } else {
      k::conv2d_forward(g, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * g.macs());
}

template <bool Serial>
void BM_Conv3x3Backward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const std::size_t n = std::size_t(g.batch) * g.in_ch * g.height * g.width;
  const std::size_t nw = std::size_t(g.out_ch) * g.in_ch * 9;
  const auto x = noise(n, 1), w = noise(nw, 2), gy = noise(n, 3);
  std::vector<Real> dx(n), dw(nw), db(std::size_t(g.out_ch));
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::conv2d_backward(g, x, w, gy, dx, dw, db);
    } else {
      k::conv2d_backward(g, x, w, gy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * g.macs());
}

template <bool Serial>
void BM_Bilinear(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int s = static_cast<int>(state.range(1));
  const k::SampleGeometry g{4, c, s, s, 4};
  const std::size_t n = std::size_t(4) * c * s * s;
  const auto x = noise(n, 4);
  const auto coords = noise(std::size_t(4) * 8 * s * s, 5, -1, s);
  std::vector<Real> y(n);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::bilinear_forward(g, x, coords, y);
    } else {
      k::bilinear_forward(g, x, coords, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Serial>
void BM_Rfft2(benchmark::State& state) {
  const int planes = static_cast<int>(state.range(0));
  const int s = static_cast<int>(state.range(1));
  const auto x = noise(std::size_t(planes) * s * s, 6);
  const std::size_t half = std::size_t(planes) * s * (s / 2 + 1);
  std::vector<Real> re(half), im(half);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::rfft2_planes(planes, s, s, x, re, im);
    } else {
      k::rfft2_planes(planes, s, s, x, re, im);
    }
    benchmark::DoNotOptimize(re.data());
  }
  state.SetItemsProcessed(state.iterations() * planes);
}

template <bool Serial>
void BM_Wkv(benchmark::State& state) {
  const k::WkvGeometry g{4, static_cast<int>(state.range(0)), static_cast<int>(state.range(1))};
  const std::size_t n = std::size_t(g.batch) * g.channels * g.length;
  const auto kk = noise(n, 7, -2, 2), v = noise(n, 8), w = noise(std::size_t(g.channels), 9, -2, 1),
             u = noise(std::size_t(g.channels), 10);
  std::vector<Real> out(n), log_den(n);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::wkv_forward(g, kk, v, w, u, out);
    } else {
      k::wkv_forward(g, kk, v, w, u, out, log_den);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(BM_Conv3x3Forward<true>)->Name("conv3x3_forward/serial")->Args({16, 64})->Args({64, 16});
BENCHMARK(BM_Conv3x3Forward<false>)->Name("conv3x3_forward/parallel")->Args({16, 64})->Args({64, 16});
BENCHMARK(BM_Conv3x3Backward<true>)->Name("conv3x3_backward/serial")->Args({16, 64})->Args({64, 16});
BENCHMARK(BM_Conv3x3Backward<false>)->Name("conv3x3_backward/parallel")->Args({16, 64})->Args({64, 16});
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/serial")->Args({16, 64});
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/parallel")->Args({16, 64});
BENCHMARK(BM_Rfft2<true>)->Name("rfft2/serial")->Args({64, 64})->Args({64, 48});
BENCHMARK(BM_Rfft2<false>)->Name("rfft2/parallel")->Args({64, 64})->Args({64, 48});
BENCHMARK(BM_Wkv<true>)->Name("wkv/serial")->Args({32, 2112});
BENCHMARK(BM_Wkv<false>)->Name("wkv/parallel")->Args({32, 2112});

int main(int argc, char** argv) {
  frwkv::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
