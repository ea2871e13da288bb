#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "frwkv/network.hpp"

FRWKV_BEGIN_NAMESPACE

// ---- Images -------------------------------------------------------------------

/// Binary PPM (P6, maxval 255) to a (1,3,H,W) tensor in [0,1].
Tensor read_ppm(const std::filesystem::path& path);
/// Clamps to [0,1] and rounds to 8 bits.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
/// 8-bit quantization used by write_ppm, as values in [0,1].
Tensor quantize_8bit(const Tensor& image);

// ---- Synthetic haze -------------------------------------------------------------

struct HazeSample {
  Tensor clean;  // (1,3,H,W)
  Tensor hazy;
  Tensor depth;  // (1,1,H,W), in [0,1]
  double beta = 0;
  double airlight = 0;
};

/// hazy = clean * t + A * (1 - t), t = exp(-beta * depth), clamped to [0,1].
Tensor apply_haze(const Tensor& clean, const Tensor& depth, double beta, double airlight);

/// Procedural clean images and smooth depth fields, beta ~ U[0.6,1.8],
/// A ~ U[0.7,1.0]. Deterministic per seed.
std::vector<HazeSample> synth_dataset(int count, int height, int width, std::uint64_t seed);

/// clean_%04d.ppm, hazy_%04d.ppm and meta.txt.
void write_dataset(const std::filesystem::path& dir, const std::vector<HazeSample>& samples, std::uint64_t seed);
/// Reads the hazy/clean pairs of a dataset directory, in index order.
std::vector<HazeSample> read_dataset(const std::filesystem::path& dir);

// ---- Loss and metrics -------------------------------------------------------------

/// mean|pred - gt| + lambda * mean over real and imaginary parts of
/// |rfft2(pred) - rfft2(gt)|.
Tensor dual_domain_loss(const Tensor& pred, const Tensor& gt, Real lambda = Real(0.15));

/// 10 log10(peak^2 / MSE), 100 dB when MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, L 1) averaged
/// over channels and images.
double ssim(const Tensor& a, const Tensor& b);

// ---- Optimization ------------------------------------------------------------------

/// lr0 at step 0 down to lr_min at step total-1 along a half cosine.
double cosine_lr(int step, int total, double lr0, double lr_min);

class Adam {
 public:
  Adam(const ParameterStore& params, double beta1, double beta2, double eps = 1e-8);
  /// Applies one update from the accumulated gradients.
  void step(double lr);
  int steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
};

struct TrainConfig {
  double lr0 = 2e-4;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int steps = 1000;
  int batch = 4;
  int patch = 64;
  double lambda_freq = 0.15;
  std::uint64_t seed = 0;
  bool augment = true;  // random crop position and horizontal flip
  int checkpoint_every = 0;
  int log_every = 1;
  ModelConfig model;

  /// Applies one key/value pair; model keys are forwarded to ModelConfig.
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

/// Parses `key = value` lines with `#` comments. Unknown keys throw.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

struct LogEntry {
  int step = 0;
  double loss = 0;
  double lr = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int step, double last_finite_loss);
  int step() const { return step_; }
  double last_finite_loss() const { return last_; }

 private:
  int step_;
  double last_;
};

struct TrainResult {
  FourierRwkvModel model;
  std::vector<LogEntry> log;
};

struct TrainHooks {
  /// Called after every logged step.
  std::function<void(const LogEntry&)> on_log;
  /// Called with the model every checkpoint_every steps and at the end.
  std::function<void(const FourierRwkvModel&, int step)> on_checkpoint;
};

/// Builds the model from cfg.model and cfg.seed and optimizes it on `data`.
TrainResult train(const std::vector<HazeSample>& data, const TrainConfig& cfg, const TrainHooks& hooks = {});
/// Continues optimizing an existing model.
void train_model(FourierRwkvModel& model, const std::vector<HazeSample>& data, const TrainConfig& cfg,
                 std::vector<LogEntry>& log, const TrainHooks& hooks = {});

void write_log_csv(const std::filesystem::path& path, const std::vector<LogEntry>& log);

/// Runs the model without recording gradients.
Tensor dehaze(const FourierRwkvModel& model, const Tensor& hazy);

FRWKV_END_NAMESPACE
