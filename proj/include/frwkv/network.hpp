#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frwkv/frwkv_block.hpp"
#include "frwkv/sbm.hpp"

FRWKV_BEGIN_NAMESPACE

/// Channel Mix hidden ratio used by the default configuration.
inline constexpr int kDefaultGamma = 6;

struct ModelConfig {
  /// 2L-1 entries for L resolution levels: L-1 encoder stages, the
  /// bottleneck, L-1 decoder stages.
  std::vector<int> stage_depths{2, 3, 3, 4, 3, 3, 2};
  int base_channels = 24;
  int gamma = kDefaultGamma;
  DqShiftMode dq_mode = DqShiftMode::full;
  GatingMode gating = GatingMode::dual;
  SeqOrder seq_order = SeqOrder::distance;
  SbmMode sbm_mode = SbmMode::full;
  bool sigmoid_spatial_gate = false;

  int levels() const { return (static_cast<int>(stage_depths.size()) + 1) / 2; }
  int width(int level) const { return base_channels << level; }
  /// Input extents must be multiples of this.
  int size_multiple() const { return 1 << (levels() - 1); }
  BlockOptions block_options() const;
  /// Throws std::invalid_argument on an unusable config.
  void validate() const;

  /// `key = value` lines, one per field.
  std::string to_text() const;
  /// Applies one key/value pair; unknown keys and bad values throw.
  void set(const std::string& key, const std::string& value);
  static ModelConfig from_text(const std::string& text);
};

class FourierRwkvModel {
 public:
  static FourierRwkvModel build(const ModelConfig& config, std::uint64_t seed);

  /// I + shallow_out(decoder(encoder(shallow_in(I)))). H and W must be
  /// multiples of config().size_multiple().
  Tensor forward(const Tensor& image) const;

  const ModelConfig& config() const { return config_; }
  const ParameterStore& parameters() const { return store_; }
  std::uint64_t seed() const { return store_.seed(); }

  std::int64_t count_parameters() const { return store_.total_parameter_count(); }
  /// Multiply-accumulates of one forward pass on a 1x3xHxW input.
  std::int64_t count_ops(int height, int width) const;

  const ConvLayer& shallow_out() const { return shallow_out_; }
  const std::vector<std::vector<FrwkvBlockParams>>& stages() const { return stages_; }
  const std::vector<SbmParams>& bridges() const { return sbm_; }

 private:
  FourierRwkvModel(const ModelConfig& config, std::uint64_t seed) : config_(config), store_(seed) {}

  ModelConfig config_;
  ParameterStore store_;
  ConvLayer shallow_in_;
  ConvLayer shallow_out_;
  std::vector<std::vector<FrwkvBlockParams>> stages_;
  std::vector<ConvLayer> down_;
  std::vector<ConvLayer> up_;
  std::vector<SbmParams> sbm_;
};

/// Binary checkpoint: "FRWK", u32 version, u32-length-prefixed config text
/// (model config plus seed), then per parameter: u32 name length, name, u32
/// rank, u32 dims, float32 data. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const FourierRwkvModel& model);
FourierRwkvModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const FourierRwkvModel& model, const std::filesystem::path& path);
FourierRwkvModel load_checkpoint(const std::filesystem::path& path);

FRWKV_END_NAMESPACE
