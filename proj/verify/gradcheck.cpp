#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "frwkv/ops.hpp"

FRWKV_BEGIN_NAMESPACE
namespace verify {

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, const std::vector<GradProbe>& probes, int samples,
                           std::uint64_t seed, double step, double floor_fraction) {
  for (const auto& p : probes) p.tensor.zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn());
  }
  std::vector<std::vector<Real>> analytic;
  double sum_sq = 0;
  std::size_t count = 0;
  for (const auto& p : probes) {
    analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    for (Real g : analytic.back()) sum_sq += static_cast<double>(g) * g;
    count += analytic.back().size();
  }
  const double floor = floor_fraction * std::sqrt(sum_sq / static_cast<double>(std::max<std::size_t>(count, 1)));

  GradCheckResult result;
  Rng rng(seed);
  autograd::NoGradGuard no_grad;
  for (int s = 0; s < samples; ++s) {
    const std::size_t which = static_cast<std::size_t>(rng.next_u64() % probes.size());
    const GradProbe& probe = probes[which];
    const auto data = probe.tensor.mutable_data();
    const std::size_t i = static_cast<std::size_t>(rng.next_u64() % data.size());
    const Real saved = data[i];
    data[i] = static_cast<Real>(saved + step);
    const double up = loss_fn().item();
    data[i] = static_cast<Real>(saved - step);
    const double down = loss_fn().item();
    data[i] = saved;
    const double numeric = (up - down) / (2 * step);
    const double a = analytic[which][i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    ++result.checked;
    if (rel >= result.max_rel_err) {
      result.max_rel_err = rel;
      std::ostringstream os;
      os.precision(10);
      os << probe.name << "[" << i << "]: analytic " << a << " vs numeric " << numeric;
      result.worst = os.str();
    }
  }
  return result;
}

std::vector<GradProbe> probes_from(const ParameterStore& store) {
  std::vector<GradProbe> out;
  for (const auto& e : store.entries()) {
    if (e.trainable) out.push_back({e.name, e.tensor});
  }
  return out;
}

Tensor random_projection(const Tensor& out, std::uint64_t seed) {
  const Tensor r = random_tensor(out.shape(), seed);
  return sum(mul(out, r));
}

void randomize(const ParameterStore& store, std::uint64_t seed, double bound) {
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    Rng rng(derive_seed(seed, e.name));
    for (Real& v : e.tensor.mutable_data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  }
}

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi, bool leaf) {
  Rng rng(seed);
  std::vector<Real> v(static_cast<std::size_t>(shape.numel()));
  for (Real& e : v) e = static_cast<Real>(rng.uniform(lo, hi));
  return leaf ? Tensor::leaf(shape, std::move(v)) : Tensor::from_data(shape, std::move(v));
}

}  // namespace verify
FRWKV_END_NAMESPACE
