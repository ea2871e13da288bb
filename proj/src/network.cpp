#include "frwkv/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "frwkv/kernels.hpp"
#include "frwkv/ops.hpp"

FRWKV_BEGIN_NAMESPACE

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<DqShiftMode> kDqNames[] = {{DqShiftMode::full, "full"},
                                              {DqShiftMode::fixed_only, "fixed_only"},
                                              {DqShiftMode::dynamic_only, "dynamic_only"},
                                              {DqShiftMode::no_gate, "no_gate"}};
constexpr EnumName<GatingMode> kGatingNames[] = {
    {GatingMode::dual, "dual"}, {GatingMode::spatial_only, "spatial_only"}, {GatingMode::fourier_only, "fourier_only"}};
constexpr EnumName<SeqOrder> kSeqNames[] = {{SeqOrder::distance, "distance"}, {SeqOrder::row_major, "row_major"}};
constexpr EnumName<SbmMode> kSbmNames[] = {{SbmMode::full, "full"},
                                           {SbmMode::random_kernels, "random_kernels"},
                                           {SbmMode::single_scale, "single_scale"},
                                           {SbmMode::sum_fusion, "sum_fusion"},
                                           {SbmMode::additive, "additive"}};

template <typename E, std::size_t N>
const char* name_of(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  throw std::logic_error("unnamed enum value");
}

template <typename E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const std::string& key, const std::string& text) {
  std::string options;
  for (const auto& e : table) {
    if (text == e.name) return e.value;
    options += options.empty() ? e.name : std::string(", ") + e.name;
  }
  throw std::invalid_argument("config: bad value '" + text + "' for " + key + " (expected one of " + options + ")");
}

int parse_int(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw std::invalid_argument("config: bad integer '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + text + "' for " + key);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

BlockOptions ModelConfig::block_options() const {
  BlockOptions o;
  o.dq_mode = dq_mode;
  o.gating = gating;
  o.seq_order = seq_order;
  o.sigmoid_spatial_gate = sigmoid_spatial_gate;
  o.gamma = gamma;
  return o;
}

void ModelConfig::validate() const {
  const std::size_t n = stage_depths.size();
  if (n == 0 || n % 2 == 0 || n > 7) {
    throw std::invalid_argument("model config: stage_depths needs 1, 3, 5 or 7 entries, got " + std::to_string(n));
  }
  for (int d : stage_depths) {
    if (d < 0) throw std::invalid_argument("model config: stage depths must be >= 0");
  }
  if (base_channels < 4 || base_channels % 4 != 0) {
    throw std::invalid_argument("model config: base_channels must be a positive multiple of 4, got " +
                                std::to_string(base_channels));
  }
  if (gamma < 1) throw std::invalid_argument("model config: gamma must be >= 1");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "stage_depths = ";
  for (std::size_t i = 0; i < stage_depths.size(); ++i) os << (i ? "," : "") << stage_depths[i];
  os << "\nbase_channels = " << base_channels << "\ngamma = " << gamma << "\ndq_mode = " << name_of(kDqNames, dq_mode)
     << "\ngating = " << name_of(kGatingNames, gating) << "\nseq_order = " << name_of(kSeqNames, seq_order)
     << "\nsbm_mode = " << name_of(kSbmNames, sbm_mode)
     << "\nsigmoid_spatial_gate = " << (sigmoid_spatial_gate ? "true" : "false") << "\n";
  return os.str();
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "stage_depths") {
    stage_depths.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) stage_depths.push_back(parse_int(key, trim(item)));
  } else if (key == "base_channels") {
    base_channels = parse_int(key, value);
  } else if (key == "gamma") {
    gamma = parse_int(key, value);
  } else if (key == "dq_mode") {
    dq_mode = parse_enum(kDqNames, key, value);
  } else if (key == "gating") {
    gating = parse_enum(kGatingNames, key, value);
  } else if (key == "seq_order") {
    seq_order = parse_enum(kSeqNames, key, value);
  } else if (key == "sbm_mode") {
    sbm_mode = parse_enum(kSbmNames, key, value);
  } else if (key == "sigmoid_spatial_gate") {
    sigmoid_spatial_gate = parse_bool(key, value);
  } else {
    throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model config: malformed line '" + line + "'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

// ---- Model -------------------------------------------------------------------

FourierRwkvModel FourierRwkvModel::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  FourierRwkvModel m(config, seed);
  ParameterStore& st = m.store_;
  const int levels = config.levels();
  const BlockOptions opt = config.block_options();
  const int base = config.base_channels;

  m.shallow_in_ = ConvLayer::create(st, "shallow_in", Conv2dSpec{3, base, 3, 1, false, Padding::replicate});
  const int n_stages = static_cast<int>(config.stage_depths.size());
  for (int s = 0; s < n_stages; ++s) {
    const int level = s < levels ? s : n_stages - 1 - s;
    const int width = config.width(level);
    std::vector<FrwkvBlockParams> blocks;
    for (int b = 0; b < config.stage_depths[static_cast<std::size_t>(s)]; ++b) {
      blocks.push_back(FrwkvBlockParams::create(
          st, "stage" + std::to_string(s) + ".block" + std::to_string(b), width, opt));
    }
    m.stages_.push_back(std::move(blocks));
    if (s < levels - 1) {
      m.down_.push_back(ConvLayer::create(st, "down" + std::to_string(level),
                                          Conv2dSpec{width, 2 * width, 3, 2, false, Padding::replicate}));
    }
  }
  for (int level = 0; level < levels - 1; ++level) {
    const int width = config.width(level);
    m.up_.push_back(ConvLayer::create(st, "up" + std::to_string(level), pointwise(2 * width, 4 * width)));
    m.sbm_.push_back(SbmParams::create(st, "sbm" + std::to_string(level), width, config.sbm_mode));
  }
  m.shallow_out_ = ConvLayer::create(st, "shallow_out", Conv2dSpec{base, 3, 3, 1, false, Padding::replicate});
  return m;
}

Tensor FourierRwkvModel::forward(const Tensor& image) const {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s.c() != 3) throw std::invalid_argument("forward: expected N,3,H,W image, got " + s.str());
  const int multiple = config_.size_multiple();
  if (s.h() % multiple != 0 || s.w() % multiple != 0) {
    throw std::invalid_argument("forward: height and width must be multiples of " + std::to_string(multiple) +
                                ", got " + std::to_string(s.h()) + "x" + std::to_string(s.w()));
  }
  const int levels = config_.levels();
  const int n_stages = static_cast<int>(stages_.size());
  auto run_stage = [&](int stage, Tensor x) {
    for (const auto& block : stages_[static_cast<std::size_t>(stage)]) x = frwkv_block(x, block);
    return x;
  };

  Tensor x = shallow_in_(image);
  std::vector<Tensor> skips;
  for (int level = 0; level < levels - 1; ++level) {
    x = run_stage(level, x);
    skips.push_back(x);
    x = down_[static_cast<std::size_t>(level)](x);
  }
  x = run_stage(levels - 1, x);
  for (int level = levels - 2; level >= 0; --level) {
    const auto l = static_cast<std::size_t>(level);
    x = pixel_shuffle(up_[l](x));
    x = sbm_forward(skips[l], x, sbm_[l]);
    x = run_stage(n_stages - 1 - level, x);
  }
  return add(image, shallow_out_(x));
}

std::int64_t FourierRwkvModel::count_ops(int height, int width) const {
  autograd::NoGradGuard no_grad;
  const Tensor probe = Tensor::full(Shape{1, 3, height, width}, Real(0.5));
  kernels::MacCounter counter;
  forward(probe);
  return counter.total();
}

// ---- Checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'R', 'W', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const FourierRwkvModel& model) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  const std::string cfg = model.config().to_text() + "seed = " + std::to_string(model.seed()) + "\n";
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  for (const auto& e : model.parameters().entries()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    const Shape& s = e.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(s.rank()));
    for (int d : s.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (Real v : e.tensor.data()) put_f32(out, static_cast<float>(v));
  }
  return out;
}

FourierRwkvModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.text(4) != std::string(kMagic, 4)) throw std::runtime_error("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  std::string cfg_text = r.text(r.u32());
  std::uint64_t seed = 0;
  const auto seed_pos = cfg_text.find("seed = ");
  if (seed_pos == std::string::npos) throw std::runtime_error("checkpoint: config block lacks a seed");
  seed = std::stoull(cfg_text.substr(seed_pos + 7));
  cfg_text.erase(seed_pos);
  FourierRwkvModel model = FourierRwkvModel::build(ModelConfig::from_text(cfg_text), seed);
  std::size_t loaded = 0;
  for (const auto& e : model.parameters().entries()) {
    const std::string name = r.text(r.u32());
    if (name != e.name) throw std::runtime_error("checkpoint: expected parameter '" + e.name + "', found '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank != static_cast<std::uint32_t>(e.tensor.rank())) {
      throw std::runtime_error("checkpoint: rank mismatch for '" + name + "'");
    }
    for (int d : e.tensor.shape().dims()) {
      if (r.u32() != static_cast<std::uint32_t>(d)) throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    for (Real& v : e.tensor.mutable_data()) v = static_cast<Real>(r.f32());
    ++loaded;
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing data after " + std::to_string(loaded) + " parameters");
  return model;
}

void save_checkpoint(const FourierRwkvModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

FourierRwkvModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

FRWKV_END_NAMESPACE
