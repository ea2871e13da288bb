#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "checks.hpp"
#include "frwkv/network.hpp"
#include "frwkv/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace frwkv::checks {

namespace {

using namespace frwkv::f64;

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double max_abs(const Tensor& t) {
  double m = 0;
  for (Real v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

double max_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data()[i] - b.data()[i])));
  return m;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

CheckResult finish(std::string id, std::string name, bool passed, std::string detail, const Timer& t) {
  return {std::move(id), std::move(name), passed, std::move(detail), t.seconds()};
}

void zero(const Tensor& t) {
  if (t.defined()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), Real(0));
}

void zero(const ConvLayer& c) {
  zero(c.weight);
  zero(c.bias);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.base_channels = 8;
  c.stage_depths = {1, 1, 1, 1, 1, 1, 1};
  return c;
}

}  // namespace

// ---- 1 ------------------------------------------------------------------------------

CheckResult wkv_oracle_equivalence() {
  Timer timer;
  Rng rng(101);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const int c = 1 + static_cast<int>(rng.next_u64() % 8);
    const int t = 1 + static_cast<int>(rng.next_u64() % 64);
    const Tensor k = verify::random_tensor(Shape{c, t}, rng.next_u64(), -4, 4);
    const Tensor v = verify::random_tensor(Shape{c, t}, rng.next_u64(), -2, 2);
    const WkvParams p{verify::random_tensor(Shape{c}, rng.next_u64(), -3, 3),
                      verify::random_tensor(Shape{c}, rng.next_u64(), -3, 3)};
    const Tensor ref = oracle::bi_wkv(k, v, p.w_raw, p.u);
    worst = std::max(worst, max_diff(bi_wkv_scan(k, v, p), ref) / std::max(max_abs(ref), 1e-300));
  }
  const double secs = timer.seconds();
  return finish("C1", "Bi-WKV scan vs quadratic oracle", worst <= 1e-5 && secs < 10,
                "200 instances, max rel err " + sci(worst) + " (tol 1e-5), runtime " + sci(secs) + " s (limit 10 s)",
                timer);
}

// ---- 2 ------------------------------------------------------------------------------

CheckResult fft_oracle_equivalence() {
  Timer timer;
  double worst_dft = 0;
  double worst_roundtrip = 0;
  std::uint64_t seed = 202;
  for (int h = 1; h <= 16; ++h) {
    for (int w = 1; w <= 16; ++w) {
      const Tensor x = verify::random_tensor(Shape{1, 2, h, w}, seed++);
      const ComplexSpectrum s = rfft2(x);
      const auto [re, im] = oracle::dft2(x);
      worst_dft = std::max({worst_dft, max_diff(s.re, re), max_diff(s.im, im)});
      worst_roundtrip = std::max(worst_roundtrip, max_diff(irfft2(s), x));
    }
  }
  const double secs = timer.seconds();
  return finish("C2", "rfft2 vs naive DFT, roundtrip",
                worst_dft <= 1e-6 && worst_roundtrip <= 1e-10 && secs < 10,
                "all HxW in [1,16]^2: max |dft diff| " + sci(worst_dft) + " (tol 1e-6), max roundtrip err " +
                    sci(worst_roundtrip) + " (tol 1e-10), runtime " + sci(secs) + " s",
                timer);
}

// ---- 3 ------------------------------------------------------------------------------

CheckResult permutation_correctness() {
  Timer timer;
  int failures = 0;
  std::string first_failure;
  auto fail = [&](int h, int wf, const std::string& what) {
    if (failures++ == 0) first_failure = std::to_string(h) + "x" + std::to_string(wf) + ": " + what;
  };
  std::uint64_t seed = 303;
  for (int h = 1; h <= 64; ++h) {
    for (int wf = 1; wf <= 33; ++wf) {
      const SpectralOrdering ord = build_ordering(h, wf);
      if (ord.perm.empty() || ord.perm[0] != 0) fail(h, wf, "perm[0] is not the DC bin");
      double prev = -1;
      for (int t = 0; t < ord.length(); ++t) {
        const int g = ord.perm[static_cast<std::size_t>(t)];
        const double fh = std::min(g / wf, h - g / wf);
        const double d = std::sqrt(fh * fh + static_cast<double>(g % wf) * (g % wf));
        if (d < prev) fail(h, wf, "distance decreases at t=" + std::to_string(t));
        prev = d;
        if (ord.inv_perm[static_cast<std::size_t>(g)] != t) fail(h, wf, "inv_perm is not the inverse");
      }
      if (ord.perm != oracle::ordering(h, wf)) fail(h, wf, "differs from enumerated ordering");
      const Tensor x = verify::random_tensor(Shape{1, 2, h, wf}, seed++);
      const Tensor back = iseq(seq(x, ord), ord);
      if (!std::equal(back.data().begin(), back.data().end(), x.data().begin())) fail(h, wf, "iseq(seq(x)) != x");
    }
  }
  return finish("C3", "Seq/ISeq permutation", failures == 0,
                failures == 0 ? "all (H, W_f) up to 64x33: exact inverse, DC first, non-decreasing distance"
                              : std::to_string(failures) + " failures, first " + first_failure,
                timer);
}

// ---- 4 ------------------------------------------------------------------------------

namespace {

struct GradCase {
  std::string name;
  verify::GradCheckResult result;
};

GradCase check_dq_shift() {
  ParameterStore st(41);
  const DqOffsetNet net = DqOffsetNet::create(st, "dq", 8, DqShiftMode::full);
  const Tensor mu = create_shift_scale(st, "mu", 8);
  verify::randomize(st, 42, 0.5);
  const Tensor x = verify::random_tensor(Shape{2, 8, 6, 7}, 43, -1, 1, true);
  auto probes = verify::probes_from(st);
  probes.push_back({"x", x});
  return {"dq_shift", verify::grad_check([&] { return verify::random_projection(dq_shift(x, net, mu), 44); },
                                         probes, 24, 45)};
}

GradCase check_fourier_mix() {
  ParameterStore st(51);
  BlockOptions opt;
  const FourierMixParams p = FourierMixParams::create(st, "fmix", 4, opt);
  verify::randomize(st, 52, 0.4);
  const Tensor x = verify::random_tensor(Shape{1, 4, 6, 8}, 53, -1, 1, true);
  auto probes = verify::probes_from(st);
  probes.push_back({"x", x});
  return {"fourier_mix", verify::grad_check([&] { return verify::random_projection(fourier_mix(x, p), 54); },
                                            probes, 30, 55)};
}

GradCase check_channel_mix() {
  ParameterStore st(61);
  BlockOptions opt;
  const ChannelMixParams p = ChannelMixParams::create(st, "cmix", 8, opt);
  verify::randomize(st, 62, 0.5);
  const Tensor x = verify::random_tensor(Shape{1, 8, 6, 6}, 63, -1, 1, true);
  auto probes = verify::probes_from(st);
  probes.push_back({"x", x});
  return {"channel_mix", verify::grad_check([&] { return verify::random_projection(channel_mix(x, p), 64); },
                                            probes, 24, 65)};
}

GradCase check_sbm() {
  ParameterStore st(71);
  const SbmParams p = SbmParams::create(st, "sbm", 4, SbmMode::full);
  verify::randomize(st, 72, 0.5);
  const Tensor xe = verify::random_tensor(Shape{2, 4, 8, 8}, 73, -1, 1, true);
  const Tensor xd = verify::random_tensor(Shape{2, 4, 8, 8}, 74, -1, 1, true);
  auto probes = verify::probes_from(st);
  probes.push_back({"x_e", xe});
  probes.push_back({"x_d", xd});
  return {"sbm_forward", verify::grad_check([&] { return verify::random_projection(sbm_forward(xe, xd, p), 75); },
                                            probes, 30, 76)};
}

GradCase check_network() {
  const FourierRwkvModel m = FourierRwkvModel::build(tiny_config(), 81);
  verify::randomize(m.parameters(), 82, 0.2);
  const Tensor img = verify::random_tensor(Shape{1, 3, 16, 16}, 83, 0, 1);
  return {"network", verify::grad_check([&] { return verify::random_projection(m.forward(img), 84); },
                                        verify::probes_from(m.parameters()), 60, 85)};
}

}  // namespace

CheckResult gradient_suite() {
  Timer timer;
  const GradCase cases[] = {check_dq_shift(), check_fourier_mix(), check_channel_mix(), check_sbm(), check_network()};
  bool ok = true;
  std::ostringstream os;
  std::string worst;
  double worst_err = -1;
  for (const auto& c : cases) {
    const bool pass = c.result.max_rel_err <= 1e-4 && c.result.checked >= 10;
    ok = ok && pass;
    os << c.name << " " << sci(c.result.max_rel_err) << "/" << c.result.checked << (pass ? "" : " FAIL") << "; ";
    if (c.result.max_rel_err > worst_err) {
      worst_err = c.result.max_rel_err;
      worst = c.name + " " + c.result.worst;
    }
  }
  const double secs = timer.seconds();
  ok = ok && secs < 300;
  os << "tol 1e-4, step 1e-5, floor 1e-3 x gradient RMS; worst " << worst << "; runtime " << sci(secs) << " s";
  return finish("C4", "Finite-difference gradient suite", ok, os.str(), timer);
}

// ---- 5 ------------------------------------------------------------------------------

CheckResult degeneracy_checks() {
  Timer timer;
  std::ostringstream os;
  // (a) zero dynamic offsets
  ParameterStore st(91);
  const DqOffsetNet net = DqOffsetNet::create(st, "dq", 8, DqShiftMode::full);
  const Tensor mu = create_shift_scale(st, "mu", 8);
  verify::randomize(st, 92, 0.5);
  zero(net.offset_proj);
  zero(mu);
  const Tensor x = verify::random_tensor(Shape{2, 8, 7, 9}, 93);
  const double da = max_diff(dq_shift(x, net, mu), oracle::fixed_qshift(x));
  os << "(a) dq_shift vs fixed Q-Shift max diff " << sci(da);

  // (b) zeroed output projections
  ParameterStore bs(94);
  const FrwkvBlockParams block = FrwkvBlockParams::create(bs, "blk", 8, BlockOptions{});
  verify::randomize(bs, 95, 0.5);
  zero(block.fmix.out_proj);
  zero(block.cmix.output);
  const Tensor xb = verify::random_tensor(Shape{1, 8, 8, 8}, 96);
  const double db = max_diff(frwkv_block(xb, block), xb);
  const FourierRwkvModel model = FourierRwkvModel::build(tiny_config(), 97);
  verify::randomize(model.parameters(), 98, 0.2);
  zero(model.shallow_out());
  const Tensor img = verify::random_tensor(Shape{1, 3, 16, 24}, 99, 0, 1);
  const double dn = max_diff(model.forward(img), img);
  os << "; (b) block identity diff " << sci(db) << ", network identity diff " << sci(dn);

  // (c) alpha = beta = 0
  ParameterStore ss(100);
  const SbmParams sbm = SbmParams::create(ss, "sbm", 4, SbmMode::full);
  zero(sbm.alpha);
  zero(sbm.beta);
  const Tensor xe = verify::random_tensor(Shape{2, 4, 8, 8}, 101);
  const Tensor xsem = verify::random_tensor(Shape{2, 4, 8, 8}, 102);
  const double dc = max_diff(semantic_replace(xe, xsem, sbm), xe);
  os << "; (c) replacement identity diff " << sci(dc) << " (all must be exactly 0)";
  return finish("C5", "Degeneracy checks", da == 0 && db == 0 && dn == 0 && dc == 0, os.str(), timer);
}

// ---- 6 ------------------------------------------------------------------------------

CheckResult normalization_invariants() {
  Timer timer;
  double kernel_err = 0;
  double kernel_min = 1;
  ParameterStore st(111);
  const SbmParams p = SbmParams::create(st, "sbm", 8, SbmMode::full);
  verify::randomize(st, 112, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor xe = verify::random_tensor(Shape{2, 8, 8, 8}, 113 + trial, -3, 3);
    const Tensor xd = verify::random_tensor(Shape{2, 8, 8, 8}, 213 + trial, -3, 3);
    for (int s = 0; s < 3; ++s) {
      const Tensor f = sbm_kernels(xe, xd, s, p);
      const int kk = f.shape()[2];
      for (std::int64_t row = 0; row < f.numel() / kk; ++row) {
        double total = 0;
        for (int e = 0; e < kk; ++e) {
          const double v = f.data()[static_cast<std::size_t>(row * kk + e)];
          kernel_min = std::min(kernel_min, v);
          total += v;
        }
        kernel_err = std::max(kernel_err, std::abs(total - 1));
      }
    }
  }
  double ksfu_err = 0;
  {
    const Tensor a = verify::random_tensor(Shape{2, 8, 8, 8}, 121, -3, 3);
    const Tensor b = verify::random_tensor(Shape{2, 8, 8, 8}, 122, -3, 3);
    const Tensor c = verify::random_tensor(Shape{2, 8, 8, 8}, 123, -3, 3);
    const Tensor w = ksfu_weights(a, b, c, p);
    const int plane = 64;
    for (int n = 0; n < 2; ++n) {
      for (int i = 0; i < plane; ++i) {
        double total = 0;
        for (int s = 0; s < 3; ++s) total += w.data()[static_cast<std::size_t>((n * 3 + s) * plane + i)];
        ksfu_err = std::max(ksfu_err, std::abs(total - 1));
      }
    }
  }
  double wkv_excess = 0;
  Rng rng(131);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + static_cast<int>(rng.next_u64() % 8);
    const int t = 1 + static_cast<int>(rng.next_u64() % 64);
    const Tensor k = verify::random_tensor(Shape{c, t}, rng.next_u64(), -5, 5);
    const Tensor v = verify::random_tensor(Shape{c, t}, rng.next_u64(), -2, 2);
    const WkvParams wp{verify::random_tensor(Shape{c}, rng.next_u64(), -3, 3),
                       verify::random_tensor(Shape{c}, rng.next_u64(), -3, 3)};
    const Tensor o = bi_wkv_scan(k, v, wp);
    for (int ch = 0; ch < c; ++ch) {
      const auto row = v.data().subspan(static_cast<std::size_t>(ch * t), static_cast<std::size_t>(t));
      const double lo = *std::min_element(row.begin(), row.end());
      const double hi = *std::max_element(row.begin(), row.end());
      for (int i = 0; i < t; ++i) {
        const double val = o.data()[static_cast<std::size_t>(ch * t + i)];
        wkv_excess = std::max({wkv_excess, lo - val, val - hi});
      }
    }
  }
  // Rounding may place a convex combination one ulp outside [min, max].
  const bool ok = kernel_err <= 1e-6 && kernel_min >= 0 && ksfu_err <= 1e-6 && wkv_excess <= 1e-12;
  return finish("C6", "Normalization invariants", ok,
                "kernel row sum err " + sci(kernel_err) + " (min entry " + sci(kernel_min) + "), KSFU weight sum err " +
                    sci(ksfu_err) + " (tol 1e-6), Bi-WKV excess over [min v, max v] " + sci(wkv_excess),
                timer);
}

// ---- 7 ------------------------------------------------------------------------------

CheckResult parameter_audit() {
  Timer timer;
  const ModelConfig cfg;
  const FourierRwkvModel m = FourierRwkvModel::build(cfg, 0);
  const double count = static_cast<double>(m.count_parameters());
  const double rel = count / 5.31e6 - 1;
  const double ops = static_cast<double>(m.count_ops(256, 256));
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "default config (gamma %d): %lld parameters = %.3f M vs 5.31 M (%+.1f%%, band +-15%%); "
                "%.2f G MACs at 256x256 vs 15.69 G reported",
                cfg.gamma, static_cast<long long>(count), count / 1e6, 100 * rel, ops / 1e9);
  return finish("C7", "Parameter audit", std::abs(rel) <= 0.15, buf, timer);
}

// ---- 8 ------------------------------------------------------------------------------

CheckResult complexity_audit() {
  Timer timer;
  const FourierRwkvModel m = FourierRwkvModel::build(ModelConfig{}, 0);
  const double small = static_cast<double>(m.count_ops(64, 64));
  const double large = static_cast<double>(m.count_ops(128, 128));
  // Sizes alternate within each repetition so a slow stretch on a shared
  // machine affects both measurements alike.
  autograd::NoGradGuard no_grad;
  const Tensor img_small = Tensor::full(Shape{1, 3, 64, 64}, Real(0.5));
  const Tensor img_large = Tensor::full(Shape{1, 3, 128, 128}, Real(0.5));
  m.forward(img_small);
  m.forward(img_large);
  double t_small = INFINITY;
  double t_large = INFINITY;
  for (int rep = 0; rep < 4; ++rep) {
    Timer ts;
    m.forward(img_small);
    t_small = std::min(t_small, ts.seconds());
    Timer tl;
    m.forward(img_large);
    t_large = std::min(t_large, tl.seconds());
  }
  const double op_ratio = large / small;
  const double time_ratio = t_large / t_small;
  char buf[256];
  std::snprintf(buf, sizeof buf, "MAC ratio 128^2/64^2 = %.3f (band [3.8, 4.3]); wall-time ratio = %.2f (limit 5.5)",
                op_ratio, time_ratio);
  return finish("C8", "Complexity audit", op_ratio >= 3.8 && op_ratio <= 4.3 && time_ratio <= 5.5, buf, timer);
}

std::vector<CheckResult> numeric_criteria() {
  return {wkv_oracle_equivalence(), fft_oracle_equivalence(), permutation_correctness(), gradient_suite(),
          degeneracy_checks(),      normalization_invariants(), parameter_audit(),       complexity_audit()};
}

std::string format(const CheckResult& r) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1f", r.seconds);
  return std::string(r.passed ? "[PASS] " : "[FAIL] ") + r.id + " " + r.name + ": " + r.detail + " (" + secs + " s)";
}

}  // namespace frwkv::checks

namespace frwkv::checks {

namespace {

using namespace frwkv::f64;

CheckResult compare(std::string id, std::string name, const Tensor& got, const Tensor& want, double tol) {
  const double err = max_diff(got, want) / std::max(max_abs(want), 1.0);
  return {std::move(id), std::move(name), err <= tol, "max scaled diff " + sci(err) + " (tol " + sci(tol) + ")", 0};
}

}  // namespace

std::vector<CheckResult> invariant_checks() {
  std::vector<CheckResult> out;
  const Timer timer;

  {
    const SpectralOrdering ord = build_ordering(4, 3);
    const std::vector<int> want{0, 1, 3, 9, 4, 10, 2, 6, 5, 7, 11, 8};
    out.push_back({"I1", "ordering of the 4x3 grid", ord.perm == want, "matches the enumerated sequence", 0});
  }
  {
    const Tensor x = verify::random_tensor(Shape{2, 3, 5, 6}, 1);
    const Conv2dSpec spec{3, 4, 3, 1, false, Padding::replicate};
    const Tensor w = verify::random_tensor(Shape{4, 3, 3, 3}, 2);
    const Tensor b = verify::random_tensor(Shape{4}, 3);
    out.push_back(compare("I2", "conv2d vs loops", conv2d(x, spec, w, b), oracle::conv2d(x, spec, w, b), 1e-12));
    const Tensor gain = verify::random_tensor(Shape{3}, 4);
    const Tensor bias = verify::random_tensor(Shape{3}, 5);
    out.push_back(compare("I3", "layer_norm vs loops", layer_norm(x, gain, bias), oracle::layer_norm(x, gain, bias, 1e-6),
                          1e-10));
  }
  {
    ParameterStore st(5);
    const DqOffsetNet net = DqOffsetNet::create(st, "dq", 8, DqShiftMode::full);
    const Tensor mu = create_shift_scale(st, "mu", 8);
    verify::randomize(st, 6, 0.5);
    const Tensor x = verify::random_tensor(Shape{2, 8, 6, 7}, 7);
    out.push_back(compare("I4", "dq_shift vs loops", dq_shift(x, net, mu), oracle::dq_shift(x, net, mu), 1e-10));
  }
  {
    ParameterStore st(8);
    const BlockOptions opt;
    const ChannelMixParams cm = ChannelMixParams::create(st, "cmix", 8, opt);
    const FourierMixParams fm = FourierMixParams::create(st, "fmix", 8, opt);
    verify::randomize(st, 9, 0.5);
    const Tensor x = verify::random_tensor(Shape{2, 8, 6, 8}, 10);
    out.push_back(compare("I5", "channel_mix vs per-pixel loops", channel_mix(x, cm), oracle::channel_mix(x, cm), 1e-10));
    out.push_back(compare("I6", "fourier_mix vs step-by-step oracle", fourier_mix(x, fm), oracle::fourier_mix(x, fm),
                          1e-9));
  }
  {
    ParameterStore st(11);
    const SbmParams p = SbmParams::create(st, "sbm", 8, SbmMode::full);
    verify::randomize(st, 12, 0.5);
    const Tensor xe = verify::random_tensor(Shape{2, 8, 8, 8}, 13);
    const Tensor xd = verify::random_tensor(Shape{2, 8, 8, 8}, 14);
    out.push_back(compare("I7", "sbm_forward vs loops", sbm_forward(xe, xd, p), oracle::sbm_forward(xe, xd, p), 1e-10));
  }
  for (auto& r : out) r.seconds = timer.seconds() / static_cast<double>(out.size());
  return out;
}

}  // namespace frwkv::checks
