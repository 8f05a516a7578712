#pragma once

// Sparsity-adaptive scheduling and the two-layer refinement driver.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdr/engine/tape.hpp"
#include "sdr/guidance/guidance.hpp"
#include "sdr/tensor.hpp"

namespace sdr::pipeline {

enum class SampleMode { Points, Lines };

SampleMode parse_sample_mode(const std::string& s);
std::string to_string(SampleMode m);

struct RefineConfig {
  int window = 13;  // p, odd
  double kappa = 2.0;
  int min_iters = 6;
  int second_layer_iters = 6;
  SampleMode mode = SampleMode::Points;
  bool final_seed_clamp = true;
  // Upper bound on layer-1 iterations; 0 means uncapped. Training uses 12.
  int max_layer1_iters = 0;
  // false freezes the mask at M0 inside each layer (ablation).
  bool update_mask = true;

  bool operator==(const RefineConfig&) const = default;
};

void validate(const RefineConfig& cfg);

struct Schedule {
  double nu_s = 0;  // ideal inter-seed spacing in pixels
  int n_layer1 = 0;
  int n_layer2 = 0;
};

/// nu = max(0, sqrt(HW/s) - 1); n1 = max(min_iters, ceil(kappa * nu / (p/2 - 1))).
/// For p <= 2 the per-iteration reach p/2 - 1 is not positive and n1 = min_iters.
Schedule iteration_count(std::size_t s, int H, int W, const RefineConfig& cfg);

/// Schedule from the average number of valid pixels per line times n_lines.
template <typename T>
Schedule iteration_count_lines(const Tensor<T>& sparse, int n_lines, const RefineConfig& cfg);

/// Rows of sparse holding at least one valid pixel.
template <typename T>
int count_lines(const Tensor<T>& sparse);

template <typename T>
std::size_t count_valid(const Tensor<T>& sparse);

// --- model ---------------------------------------------------------------------

struct ModelConfig {
  guidance::GuidanceConfig guidance;
  int qk_channels = 16;  // L
  int window = 13;       // p the propagation layers are built for

  bool operator==(const ModelConfig&) const = default;
};

inline const std::string kGuidancePrefix = "guidance.";
inline const std::string kLayer1Prefix = "mspn1.";
inline const std::string kLayer2Prefix = "mspn2.";

/// Guidance network plus two independent propagation layers, under the
/// prefixes above.
template <typename T>
ad::ParamSet<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed);

/// Window size encoded in a layer's rel_bias length.
template <typename T>
int window_of(const ad::ParamSet<T>& params, const std::string& layer_prefix);

// --- refine --------------------------------------------------------------------

struct IterationRecord {
  int layer = 0;      // 1 or 2
  int iteration = 0;  // 1-based within the layer
  double coverage = 0;  // fraction of pixels with mask > 0
  double rmse = -1;     // against GT when supplied, else -1
};

struct Diagnostics {
  std::size_t seed_count = 0;
  bool scheduled = false;
  Schedule schedule;
  std::vector<IterationRecord> iterations;
  std::vector<std::string> warnings;
};

// Called at the start of each layer (iteration 0) and after every step.
template <typename T>
using StepObserver = std::function<void(int layer, int iteration, const Tensor<T>& depth, const Tensor<T>& mask)>;

template <typename T>
struct RefineResult {
  ad::Var<T> depth;
  ad::Var<T> initial_depth;  // d0, or the predicted one in ordinary mode
  Diagnostics diagnostics;
};

/// Full refinement on a tape. d0 may be a null Var, in which case the
/// guidance depth head provides it (ordinary-completion mode).
template <typename T>
RefineResult<T> refine(const ad::Var<T>& image, const ad::Var<T>& sparse, const ad::Var<T>& d0,
                       const ad::ParamSet<T>& params, const RefineConfig& cfg, const Tensor<T>* gt = nullptr,
                       const StepObserver<T>& observer = {});

template <typename T>
struct RefineOutput {
  Tensor<T> depth;
  Tensor<T> initial_depth;
  Diagnostics diagnostics;
};

/// Inference wrapper (no gradient recording). An empty d0 selects ordinary mode.
template <typename T>
RefineOutput<T> refine(const Tensor<T>& image, const Tensor<T>& sparse, const Tensor<T>& d0,
                       const ad::ParamSet<T>& params, const RefineConfig& cfg, const Tensor<T>* gt = nullptr,
                       const StepObserver<T>& observer = {});

}  // namespace sdr::pipeline
