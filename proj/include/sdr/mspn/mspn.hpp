#pragma once

// Masked spatial propagation: one refinement step maps (depth, mask) to the
// next (depth, mask) by seed clamping, masked query/key projection,
// pixel-to-window attention, window aggregation and a mask-gated blend.

#include <cstdint>
#include <utility>

#include "sdr/depth_norm.hpp"
#include "sdr/engine/tape.hpp"
#include "sdr/tensor.hpp"

namespace sdr::mspn {

struct MspnConfig {
  int window = 13;             // p, odd
  int channels = 16;           // L, query/key width
  int guidance_channels = 64;  // C_G
};

void validate(const MspnConfig& cfg);

// Initial logit bonus a fully masked key receives over an unmasked one.
inline constexpr double kInitMaskedKeyBonus = 9.0;
// Initial relative-position bias is -slope * (Chebyshev distance).
inline constexpr double kInitDistanceSlope = 0.5;

/// Parameters of one propagation layer:
///   f_q.weight L×(1+C_G)×1×1, f_q.bias L, f_q.norm.gamma L, f_q.norm.beta L,
///   the same four under f_k, and rel_bias p².
/// Both norm.beta vectors start as the same constant vector. It is orthogonal
/// to every normalized (zero-mean) feature, so it adds exactly
/// kInitMaskedKeyBonus * M to each logit and the untrained layer already
/// prefers nearby masked keys. Zero betas let training shrink the mask
/// to nothing before any useful affinity is learned.
template <typename T>
ad::ParamSet<T> init_params(const MspnConfig& cfg, std::uint64_t seed);

// --- plain tensor operations -------------------------------------------------

/// 1 where sparse > 0, else 0.
template <typename T>
Tensor<T> init_mask(const Tensor<T>& sparse);

/// (1 - M0) * depth + M0 * sparse. seed_mask must be binary.
template <typename T>
Tensor<T> clamp_seeds(const Tensor<T>& depth, const Tensor<T>& sparse, const Tensor<T>& seed_mask);

/// (1 - M) * d_tilde + M * refined. mask must lie in [0, 1].
template <typename T>
Tensor<T> blend(const Tensor<T>& d_tilde, const Tensor<T>& refined, const Tensor<T>& mask);

// --- differentiable versions -------------------------------------------------

template <typename T>
ad::Var<T> clamp_seeds(const ad::Var<T>& depth, const ad::Var<T>& sparse, const ad::Var<T>& seed_mask);

template <typename T>
struct QueryKey {
  ad::Var<T> query;
  ad::Var<T> key;
};

/// Q = LN(conv1x1([d_tilde, G])), K = LN(conv1x1([d_tilde, G])) * mask, with
/// the depth channel standardized by norm before the projection.
template <typename T>
QueryKey<T> project_qk(const ad::Var<T>& d_tilde, const ad::Var<T>& guidance, const ad::Var<T>& mask,
                       const ad::ParamScope<T>& params, const DepthNorm& norm = {});

template <typename T>
struct Propagated {
  ad::Var<T> refined;
  ad::Var<T> mask;
};

/// Attention-weighted window averages of the depth and of the mask.
template <typename T>
Propagated<T> propagate(const ad::Var<T>& attn, const ad::Var<T>& d_tilde, const ad::Var<T>& mask, int p);

template <typename T>
ad::Var<T> blend(const ad::Var<T>& d_tilde, const ad::Var<T>& refined, const ad::Var<T>& mask);

template <typename T>
struct StepState {
  ad::Var<T> depth;
  ad::Var<T> mask;
};

struct StepOptions {
  int window = 13;
  bool update_mask = true;  // false keeps the incoming mask (ablation)
  DepthNorm depth_norm;     // applied to the depth channel of the projections
};

/// One propagation step. seed_mask is init_mask(sparse).
template <typename T>
StepState<T> step(const StepState<T>& state, const ad::Var<T>& sparse, const ad::Var<T>& seed_mask,
                  const ad::Var<T>& guidance, const ad::ParamScope<T>& params, const StepOptions& opts);

/// Convenience wrapper on plain tensors (no gradient recording).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> step(const Tensor<T>& depth, const Tensor<T>& mask, const Tensor<T>& sparse,
                                     const Tensor<T>& guidance, const ad::ParamSet<T>& params,
                                     const StepOptions& opts);

/// Brute-force step: a direct loop over pixels, window offsets and channels
/// with no shared code path with step(). Used as the equivalence oracle.
std::pair<Tensor<double>, Tensor<double>> reference_step(const Tensor<double>& depth, const Tensor<double>& mask,
                                                         const Tensor<double>& sparse,
                                                         const Tensor<double>& guidance,
                                                         const ad::ParamSet<double>& params, int p,
                                                         const DepthNorm& norm = {}, double eps = 1e-5);

}  // namespace sdr::mspn
