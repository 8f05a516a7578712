#pragma once

// Guidance network: fuses the image, the sparse depths and the initial depth
// into a C_G×H×W feature plane consumed by every propagation step.
//
// Layout (all convs 3×3 unless noted, ReLU after each encoder conv):
//   hf     = conv3x3(image) - conv1x1(image)                       C_hf @ H
//   input  = [hf, S, M0, D0]                                       C_hf+3 @ H
//   stem   -> w0 @ H, down1 -> w1 @ H/2, down2 -> w2 @ H/4, down3 -> w2 @ H/8
//   up3    = convT(down3) -> LN -> ReLU, ++ down2                  2·w2 @ H/4
//   up2    = convT(.)     -> LN -> ReLU, ++ down1                  2·w1 @ H/2
//   up1    = convT(.)     -> LN -> ReLU, ++ stem                   2·w0 @ H
//   G      = conv3x3(up1)                                          C_G @ H
//   D0head = softplus(conv3x3(up1))                                1 @ H (optional)
// Inputs whose size is not a multiple of 8 are reflect-padded at the bottom
// and right, and the outputs cropped back. The S and D0 channels enter
// standardized by a DepthNorm (S only at its valid pixels).

#include <array>
#include <cstdint>

#include "sdr/depth_norm.hpp"
#include "sdr/engine/tape.hpp"
#include "sdr/tensor.hpp"

namespace sdr::guidance {

struct GuidanceConfig {
  int hf_channels = 8;
  std::array<int, 3> widths = {16, 32, 64};
  int out_channels = 64;
  bool depth_head = false;

  bool operator==(const GuidanceConfig&) const = default;
};

inline constexpr int kStages = 3;
inline constexpr int kSizeMultiple = 1 << kStages;

template <typename T>
ad::ParamSet<T> init_params(const GuidanceConfig& cfg, std::uint64_t seed);

/// conv3x3(image) - conv1x1(image), same spatial size.
template <typename T>
ad::Var<T> extract_high_freq(const ad::Var<T>& image, const ad::ParamScope<T>& params);

/// G = network(I, S, D0).
template <typename T>
ad::Var<T> guidance_forward(const ad::Var<T>& image, const ad::Var<T>& sparse, const ad::Var<T>& d0,
                            const ad::ParamScope<T>& params, const DepthNorm& norm = {});

template <typename T>
struct GuidanceWithDepth {
  ad::Var<T> guidance;
  ad::Var<T> depth;
};

/// Ordinary-completion mode: the same trunk with no external initial depth
/// (its input channel is zero) and a positive depth head.
template <typename T>
GuidanceWithDepth<T> predict_initial_depth(const ad::Var<T>& image, const ad::Var<T>& sparse,
                                           const ad::ParamScope<T>& params, const DepthNorm& norm = {});

// Tensor convenience wrappers (no gradient recording).
template <typename T>
Tensor<T> extract_high_freq(const Tensor<T>& image, const ad::ParamSet<T>& params);
template <typename T>
Tensor<T> guidance_forward(const Tensor<T>& image, const Tensor<T>& sparse, const Tensor<T>& d0,
                           const ad::ParamSet<T>& params, const DepthNorm& norm = {});

}  // namespace sdr::guidance
