#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "frwkv/layers.hpp"

FRWKV_BEGIN_NAMESPACE

inline constexpr int kShiftGroups = 4;
inline constexpr int kOffsetChannels = 2 * kShiftGroups;

/// Fixed (row, col) offsets per channel group: up, down, left, right.
inline constexpr std::array<std::array<int, 2>, kShiftGroups> kFixedOffsets{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

enum class DqShiftMode {
  full,          // fixed offsets plus gated dynamic offsets
  fixed_only,    // dynamic offsets disabled
  dynamic_only,  // fixed offsets disabled
  no_gate,       // dynamic offsets without the sigmoid gate
};

/// Offset-generating network shared by every branch of one DQ-Shift call site.
/// Offset channel 2g holds the row offset of group g, 2g+1 the column offset.
struct DqOffsetNet {
  ConvLayer dwconv;      // depthwise 3x3
  ConvLayer offset_proj;  // 1x1, C -> 8, zero at init
  ConvLayer gate_proj;   // 1x1, C -> 8
  DqShiftMode mode = DqShiftMode::full;
  int width = 0;

  static DqOffsetNet create(ParameterStore& store, const std::string& prefix, int channels, DqShiftMode mode);
  int channels() const { return width; }
};

/// Per-branch scale vector mu (C), zero at init.
Tensor create_shift_scale(ParameterStore& store, const std::string& name, int channels);

/// D = offset_proj(GELU(dwconv(x))), A = sigmoid(gate_proj(x)), returns D * A
/// (or D in no_gate mode). Shape (N, 8, H, W).
Tensor dynamic_offsets(const Tensor& x, const DqOffsetNet& net);

/// Absolute sampling coordinates (N, 8, H, W) for the net's mode.
Tensor shift_coordinates(const Tensor& x, const DqOffsetNet& net);

/// Bilinear samples of the four channel groups at their shifted positions.
Tensor shifted_features(const Tensor& x, const DqOffsetNet& net);

/// x + (1 + mu) * shifted_features(x).
Tensor dq_shift(const Tensor& x, const DqOffsetNet& net, const Tensor& mu);

/// One output per mu, sharing the offset field and the sampled features.
std::vector<Tensor> dq_shift_branches(const Tensor& x, const DqOffsetNet& net, std::span<const Tensor> mus);

FRWKV_END_NAMESPACE
