#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "frwkv/harness.hpp"

FRWKV_BEGIN_NAMESPACE

double cosine_lr(int step, int total, double lr0, double lr_min) {
  if (total <= 1) return lr0;
  const double t = std::clamp(static_cast<double>(step) / (total - 1), 0.0, 1.0);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

Adam::Adam(const ParameterStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    const auto n = static_cast<std::size_t>(e.tensor.numel());
    slots_.push_back(Slot{e.tensor, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (Slot& s : slots_) {
    const auto g = s.param.grad();
    auto p = s.param.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
      const double update = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
      p[i] = static_cast<Real>(p[i] - update);
    }
  }
}

// ---- Configuration ---------------------------------------------------------------

namespace {

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw std::invalid_argument("config: bad number '" + text + "' for " + key);
  return v;
}

int parse_count(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != std::floor(v) || v < 0 || v > 1e9) throw std::invalid_argument("config: bad count '" + text + "' for " + key);
  return static_cast<int>(v);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lr0") {
    lr0 = parse_double(key, value);
  } else if (key == "lr_min") {
    lr_min = parse_double(key, value);
  } else if (key == "beta1") {
    beta1 = parse_double(key, value);
  } else if (key == "beta2") {
    beta2 = parse_double(key, value);
  } else if (key == "steps") {
    steps = parse_count(key, value);
  } else if (key == "batch") {
    batch = parse_count(key, value);
  } else if (key == "patch") {
    patch = parse_count(key, value);
  } else if (key == "lambda_freq") {
    lambda_freq = parse_double(key, value);
  } else if (key == "seed") {
    std::size_t used = 0;
    try {
      seed = std::stoull(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw std::invalid_argument("config: bad seed '" + value + "'");
  } else if (key == "augment") {
    if (value != "true" && value != "false") throw std::invalid_argument("config: augment must be true or false");
    augment = value == "true";
  } else if (key == "checkpoint_every") {
    checkpoint_every = parse_count(key, value);
  } else if (key == "log_every") {
    log_every = parse_count(key, value);
  } else {
    model.set(key, value);
  }
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
  if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
  if (patch < 8) throw std::invalid_argument("train config: patch must be >= 8");
  if (!(lr0 > 0) || !(lr_min >= 0) || lr_min > lr0) throw std::invalid_argument("train config: need 0 <= lr_min <= lr0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("train config: betas must lie in [0,1)");
  }
  if (lambda_freq < 0) throw std::invalid_argument("train config: lambda_freq must be >= 0");
  model.validate();
  if (patch % model.size_multiple() != 0) {
    throw std::invalid_argument("train config: patch must be a multiple of " + std::to_string(model.size_multiple()));
  }
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), std::move(base));
}

// ---- Training --------------------------------------------------------------------

TrainingError::TrainingError(int step, double last_finite_loss)
    : std::runtime_error("training diverged: non-finite loss at step " + std::to_string(step) +
                         " (last finite loss " + std::to_string(last_finite_loss) + ")"),
      step_(step),
      last_(last_finite_loss) {}

namespace {

// Copies a patch x patch crop of sample image (1,3,H,W) into dst, optionally
// mirrored horizontally.
void crop_into(const Tensor& img, int top, int left, int patch, bool flip, Real* dst) {
  const Shape& s = img.shape();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < patch; ++y) {
      const Real* row = img.ptr() + (static_cast<std::int64_t>(c) * s.h() + top + y) * s.w() + left;
      Real* out = dst + (static_cast<std::int64_t>(c) * patch + y) * patch;
      for (int x = 0; x < patch; ++x) out[x] = row[flip ? patch - 1 - x : x];
    }
  }
}

}  // namespace

void train_model(FourierRwkvModel& model, const std::vector<HazeSample>& data, const TrainConfig& cfg,
                 std::vector<LogEntry>& log, const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& s : data) {
    if (s.hazy.shape().h() < cfg.patch || s.hazy.shape().w() < cfg.patch) {
      throw std::invalid_argument("train: image smaller than the training patch");
    }
  }
  Adam adam(model.parameters(), cfg.beta1, cfg.beta2);
  Rng rng(derive_seed(cfg.seed, "train/batches"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);

  const int p = cfg.patch;
  const std::size_t per_image = static_cast<std::size_t>(3) * p * p;
  double last_finite = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Real> hazy(per_image * static_cast<std::size_t>(cfg.batch));
    std::vector<Real> clean(hazy.size());
    for (int b = 0; b < cfg.batch; ++b) {
      const HazeSample& s = data[order[(static_cast<std::size_t>(step) * cfg.batch + b) % order.size()]];
      int top = 0;
      int left = 0;
      bool flip = false;
      if (cfg.augment) {
        top = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(s.hazy.shape().h() - p + 1));
        left = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(s.hazy.shape().w() - p + 1));
        flip = (rng.next_u64() & 1) != 0;
      }
      crop_into(s.hazy, top, left, p, flip, hazy.data() + per_image * b);
      crop_into(s.clean, top, left, p, flip, clean.data() + per_image * b);
    }
    const Tensor x = Tensor::from_data(Shape{cfg.batch, 3, p, p}, std::move(hazy));
    const Tensor y = Tensor::from_data(Shape{cfg.batch, 3, p, p}, std::move(clean));

    model.parameters().zero_grad();
    double loss_value = 0;
    {
      Tape tape;
      const Tensor loss = dual_domain_loss(model.forward(x), y, static_cast<Real>(cfg.lambda_freq));
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw TrainingError(step, last_finite);
      tape.backward(loss);
    }
    last_finite = loss_value;
    const double lr = cosine_lr(step, cfg.steps, cfg.lr0, cfg.lr_min);
    adam.step(lr);
    const LogEntry entry{static_cast<int>(log.size()), loss_value, lr};
    log.push_back(entry);
    if (hooks.on_log && (cfg.log_every <= 1 || step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      hooks.on_log(entry);
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 != cfg.steps) {
      hooks.on_checkpoint(model, step + 1);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(model, cfg.steps);
}

TrainResult train(const std::vector<HazeSample>& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  TrainResult r{FourierRwkvModel::build(cfg.model, cfg.seed), {}};
  train_model(r.model, data, cfg, r.log, hooks);
  return r;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogEntry>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("log: cannot write " + path.string());
  out.precision(9);
  out << "step,loss,lr\n";
  for (const auto& e : log) out << e.step << "," << e.loss << "," << e.lr << "\n";
}

Tensor dehaze(const FourierRwkvModel& model, const Tensor& hazy) {
  autograd::NoGradGuard no_grad;
  return model.forward(hazy);
}

FRWKV_END_NAMESPACE
