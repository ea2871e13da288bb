#pragma once

#include <functional>
#include <string>
#include <vector>

#include "frwkv/params.hpp"
#include "frwkv/tensor.hpp"

FRWKV_BEGIN_NAMESPACE
namespace verify {

struct GradProbe {
  std::string name;
  Tensor tensor;
};

struct GradCheckResult {
  int checked = 0;
  double max_rel_err = 0;
  std::string worst;  // "name[index]: analytic vs numeric"
};

/// Central-difference check of d loss / d tensor at `samples` entries drawn
/// uniformly from a uniformly chosen probe.
/// Relative error is |a - n| / max(|a|, |n|, floor_fraction * g_rms), where
/// g_rms is the RMS of the analytic gradient over all probe entries. The floor
/// keeps entries far below the finite-difference rounding noise from
/// dominating the result.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, const std::vector<GradProbe>& probes, int samples,
                           std::uint64_t seed, double step = 1e-5, double floor_fraction = 1e-3);

/// Trainable store entries as probes.
std::vector<GradProbe> probes_from(const ParameterStore& store);

/// sum(out * R) with a fixed random R, so gradients are O(1) and dense.
Tensor random_projection(const Tensor& out, std::uint64_t seed);

/// Fills every trainable entry of the store with uniform(-bound, bound) noise.
void randomize(const ParameterStore& store, std::uint64_t seed, double bound);

/// Tensor filled from uniform(lo, hi).
Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1, double hi = 1, bool leaf = false);

}  // namespace verify
FRWKV_END_NAMESPACE
