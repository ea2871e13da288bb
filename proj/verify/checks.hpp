#pragma once

// Check suites shared by the CLI selfcheck and the acceptance tests. This
// header is independent of the library precision: numeric checks run in the
// double build, training checks in the float build.

#include <cstdint>
#include <string>
#include <vector>

namespace frwkv::checks {

struct CheckResult {
  std::string id;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

// Criteria evaluated in double precision.
CheckResult wkv_oracle_equivalence();
CheckResult fft_oracle_equivalence();
CheckResult permutation_correctness();
CheckResult gradient_suite();
CheckResult degeneracy_checks();
CheckResult normalization_invariants();
CheckResult parameter_audit();
CheckResult complexity_audit();

std::vector<CheckResult> numeric_criteria();

/// Additional module-level invariants, cheap enough for selfcheck.
std::vector<CheckResult> invariant_checks();

// Training criteria, evaluated in single precision.
struct OverfitSettings {
  int steps = 3000;
  double lr0 = 2e-4;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 7;
};

struct OverfitOutcome {
  double initial_loss = 0;
  double final_loss = 0;
  double train_psnr = 0;
  std::vector<std::uint8_t> checkpoint;
  double seconds = 0;
};

/// Trains the tiny model (base 8, one block per stage) on four 64x64 pairs.
/// `variant` is "full" or one of the single-ablation names.
OverfitOutcome run_overfit(const OverfitSettings& settings, const std::string& variant = "full");
std::vector<std::string> ablation_variants();

CheckResult overfit_criterion(const OverfitOutcome& outcome);
/// Seeds run from settings.seed upward. `first_full`, when given, is a finished
/// full-model run with exactly `settings` and stands in for the first seed.
CheckResult ablation_criterion(const OverfitSettings& settings, int seeds, const OverfitOutcome* first_full = nullptr);
CheckResult determinism_criterion(const OverfitOutcome& first, const OverfitSettings& settings);

/// Formats "[PASS] id name: detail (t s)".
std::string format(const CheckResult& r);

}  // namespace frwkv::checks
