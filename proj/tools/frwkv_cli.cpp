// Command-line front end: synth, train, dehaze, eval, selfcheck.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "frwkv/harness.hpp"
#include "frwkv/runtime.hpp"

namespace fs = std::filesystem;
using namespace frwkv;

namespace {

struct SynthArgs {
  fs::path out;
  int count = 16;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const auto samples = synth_dataset(a.count, a.height, a.width, a.seed);
  write_dataset(a.out, samples, a.seed);
  std::printf("wrote %d pairs of %dx%d to %s\n", a.count, a.height, a.width, a.out.string().c_str());
  return 0;
}

struct TrainArgs {
  fs::path data;
  fs::path config;
  fs::path out = "run";
  fs::path resume;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();

  const auto data = read_dataset(a.data);
  fs::create_directories(a.out);
  std::vector<LogEntry> log;
  TrainHooks hooks;
  if (!a.quiet) {
    const int every = std::max(1, cfg.steps / 20);
    hooks.on_log = [every, total = cfg.steps](const LogEntry& e) {
      if (e.step % every == 0 || e.step == total - 1) {
        std::printf("step %6d  loss %.6f  lr %.3g\n", e.step, e.loss, e.lr);
        std::fflush(stdout);
      }
    };
  }
  hooks.on_checkpoint = [&](const FourierRwkvModel& m, int step) {
    save_checkpoint(m, a.out / "checkpoint.bin");
    if (cfg.checkpoint_every > 0 && step < cfg.steps) {
      char name[32];
      std::snprintf(name, sizeof name, "checkpoint_%06d.bin", step);
      save_checkpoint(m, a.out / name);
    }
  };

  if (a.resume.empty()) {
    TrainResult r = train(data, cfg, hooks);
    log = std::move(r.log);
  } else {
    FourierRwkvModel model = load_checkpoint(a.resume);
    train_model(model, data, cfg, log, hooks);
  }
  write_log_csv(a.out / "log.csv", log);
  std::ofstream(a.out / "config.txt") << "# resolved training configuration\n"
                                      << "lr0 = " << cfg.lr0 << "\nlr_min = " << cfg.lr_min << "\nsteps = " << cfg.steps
                                      << "\nbatch = " << cfg.batch << "\npatch = " << cfg.patch
                                      << "\nlambda_freq = " << cfg.lambda_freq << "\nseed = " << cfg.seed << "\n"
                                      << cfg.model.to_text();
  std::printf("trained %zu steps on %zu pairs; outputs in %s\n", log.size(), data.size(), a.out.string().c_str());
  return 0;
}

int run_dehaze(const fs::path& in, const fs::path& out, const fs::path& ckpt) {
  const FourierRwkvModel model = load_checkpoint(ckpt);
  const Tensor hazy = read_ppm(in);
  const int m = model.config().size_multiple();
  if (hazy.shape().h() % m != 0 || hazy.shape().w() % m != 0) {
    throw std::invalid_argument("dehaze: image " + std::to_string(hazy.shape().w()) + "x" +
                                std::to_string(hazy.shape().h()) + " is not a multiple of " + std::to_string(m));
  }
  write_ppm(out, dehaze(model, hazy));
  return 0;
}

struct EvalArgs {
  fs::path pred;
  fs::path ref;
  fs::path data;
  fs::path ckpt;
  bool per_image = false;
};

int run_eval(const EvalArgs& a) {
  std::vector<std::pair<std::string, std::pair<Tensor, Tensor>>> pairs;
  if (!a.ckpt.empty()) {
    if (a.data.empty()) throw std::invalid_argument("eval: --ckpt needs --data");
    const FourierRwkvModel model = load_checkpoint(a.ckpt);
    const auto samples = read_dataset(a.data);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      pairs.push_back({"pair " + std::to_string(i), {quantize_8bit(dehaze(model, samples[i].hazy)), samples[i].clean}});
    }
  } else {
    if (a.pred.empty() || a.ref.empty()) throw std::invalid_argument("eval: give --pred and --ref, or --data and --ckpt");
    std::map<std::string, fs::path> files;
    for (const auto& e : fs::directory_iterator(a.pred)) {
      if (e.path().extension() == ".ppm") files[e.path().filename().string()] = e.path();
    }
    for (const auto& [name, path] : files) {
      const fs::path other = a.ref / name;
      if (!fs::exists(other)) throw std::runtime_error("eval: " + other.string() + " is missing");
      pairs.push_back({name, {read_ppm(path), read_ppm(other)}});
    }
  }
  if (pairs.empty()) throw std::runtime_error("eval: nothing to compare");

  double psnr_sum = 0;
  double ssim_sum = 0;
  for (const auto& [name, p] : pairs) {
    const double ps = psnr(p.first, p.second);
    const double ss = ssim(p.first, p.second);
    psnr_sum += ps;
    ssim_sum += ss;
    if (a.per_image) std::printf("%-24s psnr %8.3f  ssim %.5f\n", name.c_str(), ps, ss);
  }
  const double n = static_cast<double>(pairs.size());
  std::printf("images %zu  mean psnr %.3f dB  mean ssim %.5f\n", pairs.size(), psnr_sum / n, ssim_sum / n);
  return 0;
}

int run_selfcheck() {
  std::vector<checks::CheckResult> results = checks::numeric_criteria();
  for (auto& r : checks::invariant_checks()) results.push_back(std::move(r));
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s\n", checks::format(r).c_str());
    failed += r.passed ? 0 : 1;
  }
  std::printf("%zu checks, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  frwkv::tune_allocator();
  CLI::App app{"Fourier-RWKV dehazing: data synthesis, training, inference and checks"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a synthetic hazy/clean dataset");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--count", synth.count, "number of pairs")->check(CLI::PositiveNumber);
  s->add_option("--height", synth.height, "image height, multiple of 8");
  s->add_option("--width", synth.width, "image width, multiple of 8");
  s->add_option("--seed", synth.seed, "generator seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model on a dataset directory");
  t->add_option("--data", tr.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--config", tr.config, "key = value configuration file")->check(CLI::ExistingFile);
  t->add_option("--set", tr.overrides, "override one key, e.g. --set steps=200 (repeatable)");
  t->add_option("--out", tr.out, "output directory for checkpoints and log.csv");
  t->add_option("--resume", tr.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  t->add_flag("--quiet", tr.quiet, "no progress output");

  fs::path dh_in, dh_out, dh_ckpt;
  auto* d = app.add_subcommand("dehaze", "dehaze one PPM image");
  d->add_option("input", dh_in, "hazy P6 image")->required()->check(CLI::ExistingFile);
  d->add_option("output", dh_out, "output P6 image")->required();
  d->add_option("--ckpt", dh_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "PSNR and SSIM over matching images or a dataset");
  e->add_option("--pred", ev.pred, "directory of restored images")->check(CLI::ExistingDirectory);
  e->add_option("--ref", ev.ref, "directory of references with the same file names")->check(CLI::ExistingDirectory);
  e->add_option("--data", ev.data, "dataset directory, dehazed with --ckpt")->check(CLI::ExistingDirectory);
  e->add_option("--ckpt", ev.ckpt, "model checkpoint")->check(CLI::ExistingFile);
  e->add_flag("--per-image", ev.per_image, "print one line per image");

  auto* c = app.add_subcommand("selfcheck", "run oracle, gradient and invariant checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (s->parsed()) return run_synth(synth);
    if (t->parsed()) return run_train(tr);
    if (d->parsed()) return run_dehaze(dh_in, dh_out, dh_ckpt);
    if (e->parsed()) return run_eval(ev);
    if (c->parsed()) return run_selfcheck();
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
