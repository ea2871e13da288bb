// End-to-end checks of the command-line tool. argv[1] is its path.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "frwkv/harness.hpp"
#include "frwkv/runtime.hpp"

namespace fs = std::filesystem;
using namespace frwkv;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
  failures += ok ? 0 : 1;
}

int run(const std::string& cmd, const fs::path& capture) {
  const int status = std::system((cmd + " > " + capture.string() + " 2>&1").c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  frwkv::tune_allocator();
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s path/to/frwkv [--with-selfcheck]\n", argv[0]);
    return 2;
  }
  const std::string exe = argv[1];
  const bool with_selfcheck = argc > 2 && std::string(argv[2]) == "--with-selfcheck";
  const fs::path dir = fs::temp_directory_path() / "frwkv_cli_tests";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "out.txt";

  expect(run(exe + " synth --out " + (dir / "data").string() + " --count 2 --height 32 --width 32 --seed 3", log) == 0,
         "synth writes a dataset");
  expect(fs::exists(dir / "data" / "hazy_0001.ppm") && fs::exists(dir / "data" / "meta.txt"),
         "dataset layout has indexed pairs and meta.txt");

  ModelConfig cfg;
  cfg.stage_depths = {1, 1, 1};
  cfg.base_channels = 4;
  cfg.gamma = 2;
  const FourierRwkvModel model = FourierRwkvModel::build(cfg, 5);
  for (const Tensor& t : {model.shallow_out().weight, model.shallow_out().bias}) {
    std::fill(t.mutable_data().begin(), t.mutable_data().end(), Real(0));
  }
  save_checkpoint(model, dir / "identity.bin");
  const fs::path hazy = dir / "data" / "hazy_0000.ppm";
  expect(run(exe + " dehaze " + hazy.string() + " " + (dir / "out.ppm").string() + " --ckpt " +
                 (dir / "identity.bin").string(),
             log) == 0,
         "dehaze runs");
  expect(slurp(dir / "out.ppm") == slurp(hazy), "dehaze with a zero output head reproduces the input pixels");

  fs::create_directories(dir / "copy");
  fs::copy_file(hazy, dir / "copy" / "hazy_0000.ppm");
  fs::copy_file(dir / "data" / "clean_0000.ppm", dir / "copy" / "clean_0000.ppm");
  fs::create_directories(dir / "pred");
  fs::copy_file(hazy, dir / "pred" / "hazy_0000.ppm");
  fs::copy_file(dir / "data" / "clean_0000.ppm", dir / "pred" / "clean_0000.ppm");
  expect(run(exe + " eval --pred " + (dir / "pred").string() + " --ref " + (dir / "copy").string(), log) == 0,
         "eval on identical directories runs");
  const std::string report = slurp(log);
  expect(report.find("mean psnr 100.000 dB") != std::string::npos && report.find("mean ssim 1.00000") != std::string::npos,
         "eval on identical directories reports 100 dB and SSIM 1: " + report.substr(0, report.find('\n')));

  std::ofstream(dir / "train.cfg") << "# tiny run\nsteps = 3\nbatch = 1\npatch = 16\nbase_channels = 4\n"
                                      "stage_depths = 1,1,1\ngamma = 2\nseed = 2\n";
  expect(run(exe + " train --quiet --data " + (dir / "data").string() + " --config " + (dir / "train.cfg").string() +
                 " --out " + (dir / "run").string(),
             log) == 0,
         "train runs from a config file");
  const std::string csv = slurp(dir / "run" / "log.csv");
  expect(csv.rfind("step,loss,lr\n", 0) == 0 && std::count(csv.begin(), csv.end(), '\n') == 4,
         "training log is a step,loss,lr CSV with one row per step");
  expect(run(exe + " eval --data " + (dir / "data").string() + " --ckpt " + (dir / "run" / "checkpoint.bin").string(),
             log) == 0,
         "eval dehazes a dataset with a trained checkpoint");

  expect(run(exe + " train --data " + (dir / "data").string() + " --set colour=red", log) != 0,
         "unknown config keys fail");
  expect(run(exe + " dehaze " + hazy.string() + " x.ppm --ckpt " + (dir / "data" / "meta.txt").string(), log) != 0,
         "a corrupt checkpoint fails");
  expect(run(exe + " synth --out " + (dir / "x").string() + " --bogus", log) != 0, "unknown flags fail");

  if (with_selfcheck) expect(run(exe + " selfcheck", log) == 0, "selfcheck passes:\n" + slurp(log));

  fs::remove_all(dir);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
