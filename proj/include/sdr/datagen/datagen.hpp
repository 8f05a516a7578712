#pragma once

// Synthetic scenes, a monocular-depth error simulator and sparse samplers.

#include <cstdint>
#include <string>
#include <vector>

#include "sdr/rng.hpp"
#include "sdr/tensor.hpp"

namespace sdr::datagen {

struct DepthRange {
  double min = 0.5;
  double max = 10.0;
};

struct Scene {
  Tensor<float> image;  // 3×H×W in [0, 1]
  Tensor<float> depth;  // H×W, meters
  std::uint64_t seed = 0;
};

/// Background plane plus 2-6 boxes / slanted planes (complexity 0: the plane
/// alone). Image = segment albedo × texture × shading from the depth gradient.
Scene gen_scene(std::uint64_t seed, int H, int W, int complexity = 1, DepthRange range = {});

/// gt * exp(bias) with optional 3×3 smoothing across depth edges.
Tensor<float> apply_bias(const Tensor<float>& gt, const Tensor<double>& bias, bool edge_blur);

/// Smooth low-frequency field with |B| <= 0.3 * severity everywhere.
Tensor<double> bias_field(std::uint64_t seed, int H, int W, double severity);

/// Simulated monocular estimate. severity 0 returns gt unchanged.
Tensor<float> simulate_mde(const Tensor<float>& gt, std::uint64_t seed, double severity);

/// s pixels drawn without replacement from gt > 0; s = 0 gives an empty map.
Tensor<float> sample_points(const Tensor<float>& gt, int s, std::uint64_t seed);

/// Row indices used by sample_lines: o + floor(k·H/n), o seeded in [0, floor(H/n)).
std::vector<int> line_rows(int H, int n_lines, std::uint64_t seed);
Tensor<float> sample_lines(const Tensor<float>& gt, int n_lines, std::uint64_t seed);

struct Rect {
  int top = 0, left = 0, height = 0, width = 0;
};

/// Half-size rectangle centered in an H×W map.
Rect centered_hole(int H, int W);

struct HoleSample {
  Tensor<float> sparse;  // input with the rectangle cleared
  Tensor<float> region;  // 1 inside the rectangle, 0 elsewhere
};

HoleSample mask_hole(const Tensor<float>& sparse, const Rect& rect);

enum class SparsityKind { Points, Lines };

/// Variable-sparsity draw used during training.
struct SparsityProtocol {
  SparsityKind kind = SparsityKind::Points;
  int min_points = 10;
  int max_points = 1000;
  std::vector<int> line_choices = {4, 8, 16, 32, 64};
  // Rescale point counts by H·W / (228·304) for small images.
  bool area_scaling = true;

  bool operator==(const SparsityProtocol&) const = default;
};

inline constexpr double kReferenceArea = 228.0 * 304.0;

/// max(1, round(s · H·W / (228·304))) when H·W is below the reference area.
int scale_sparsity(int s, int H, int W);

/// A point count or a line count, depending on the protocol kind.
int draw_sparsity(const SparsityProtocol& protocol, Rng& rng, int H, int W);

void validate(const SparsityProtocol& p);

}  // namespace sdr::datagen
