#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "checks.hpp"
#include "frwkv/harness.hpp"

namespace frwkv::checks {

namespace {

using namespace frwkv::f32;

constexpr int kPairs = 4;
constexpr int kSize = 64;

ModelConfig tiny_model(const std::string& variant) {
  ModelConfig c;
  c.base_channels = 8;
  c.stage_depths = {1, 1, 1, 1, 1, 1, 1};
  if (variant == "full") return c;
  if (variant == "fixed_offset_only") {
    c.dq_mode = DqShiftMode::fixed_only;
  } else if (variant == "spatial_gate_only") {
    c.gating = GatingMode::spatial_only;
  } else if (variant == "row_major_seq") {
    c.seq_order = SeqOrder::row_major;
  } else if (variant == "random_kernels") {
    c.sbm_mode = SbmMode::random_kernels;
  } else {
    throw std::invalid_argument("unknown ablation variant '" + variant + "'");
  }
  return c;
}

TrainConfig overfit_config(const OverfitSettings& s, const std::string& variant) {
  TrainConfig cfg;
  cfg.model = tiny_model(variant);
  cfg.steps = s.steps;
  cfg.lr0 = s.lr0;
  cfg.batch = kPairs;
  cfg.patch = kSize;
  cfg.lambda_freq = 0.15;
  cfg.augment = false;
  cfg.seed = s.seed;
  return cfg;
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

}  // namespace

std::vector<std::string> ablation_variants() {
  return {"fixed_offset_only", "spatial_gate_only", "row_major_seq", "random_kernels"};
}

OverfitOutcome run_overfit(const OverfitSettings& settings, const std::string& variant) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<HazeSample> data = synth_dataset(kPairs, kSize, kSize, settings.data_seed);
  const TrainResult r = train(data, overfit_config(settings, variant));
  OverfitOutcome out;
  out.initial_loss = r.log.front().loss;
  // The logged loss of the last step precedes its update, so evaluate afresh.
  {
    autograd::NoGradGuard no_grad;
    double loss = 0;
    double total_psnr = 0;
    for (const auto& d : data) {
      const Tensor pred = r.model.forward(d.hazy);
      loss += static_cast<double>(dual_domain_loss(pred, d.clean).item());
      total_psnr += psnr(pred, d.clean);
    }
    out.final_loss = loss / kPairs;
    out.train_psnr = total_psnr / kPairs;
  }
  out.checkpoint = serialize_checkpoint(r.model);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

CheckResult overfit_criterion(const OverfitOutcome& o) {
  const bool ok = o.train_psnr >= 30 && o.final_loss * 10 <= o.initial_loss;
  return {"C9", "Overfit tiny model", ok,
          fmt("train PSNR %.2f dB (need >= 30); loss %.4f -> %.5f, reduction %.1fx (need >= 10x)", o.train_psnr,
              o.initial_loss, o.final_loss, o.initial_loss / o.final_loss),
          o.seconds};
}

CheckResult ablation_criterion(const OverfitSettings& settings, int seeds, const OverfitOutcome* first_full) {
  const auto start = std::chrono::steady_clock::now();
  const auto variants = ablation_variants();
  int wins = 0;
  std::string detail;
  for (int i = 0; i < seeds; ++i) {
    OverfitSettings s = settings;
    s.seed = settings.seed + static_cast<std::uint64_t>(i);
    const double full =
        (i == 0 && first_full != nullptr) ? first_full->final_loss : run_overfit(s, "full").final_loss;
    bool best = true;
    detail += "seed " + std::to_string(s.seed) + fmt(" full %.4f", full);
    for (const auto& v : variants) {
      const double loss = run_overfit(s, v).final_loss;
      detail += " " + v + fmt(" %.4f", loss);
      best = best && full <= loss;
    }
    detail += best ? " [full best]; " : " [full not best]; ";
    wins += best ? 1 : 0;
  }
  const int needed = seeds - 1;
  detail += std::to_string(wins) + "/" + std::to_string(seeds) + " seeds (need " + std::to_string(needed) + "), " +
            std::to_string(settings.steps) + " steps per run";
  return {"C10", "Ablation ordering", wins >= needed, detail,
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
}

CheckResult determinism_criterion(const OverfitOutcome& first, const OverfitSettings& settings) {
  const OverfitOutcome second = run_overfit(settings, "full");
  const bool same = first.checkpoint == second.checkpoint;
  return {"C11", "Deterministic checkpoints", same && !first.checkpoint.empty(),
          std::to_string(first.checkpoint.size()) + "-byte checkpoints " + (same ? "identical" : "differ"),
          second.seconds};
}

}  // namespace frwkv::checks
