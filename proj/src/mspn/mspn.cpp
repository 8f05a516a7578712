#include "sdr/mspn/mspn.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdr/engine/init.hpp"
#include "sdr/engine/ops.hpp"
#include "sdr/kernels/kernels.hpp"

namespace sdr::mspn {
namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
void check_binary(const Tensor<T>& m) {
  for (T v : m.vec()) {
    if (v != T(0) && v != T(1)) throw ContractError("seed mask must be binary");
  }
}

template <typename T>
void check_unit_range(const Tensor<T>& m) {
  for (T v : m.vec()) {
    if (!(v >= T(0) && v <= T(1))) throw ContractError("propagation mask value outside [0, 1]");
  }
}

}  // namespace

void validate(const MspnConfig& cfg) {
  if (cfg.window < 1 || cfg.window % 2 == 0) {
    throw ConfigError("window size must be odd and >= 1, got " + std::to_string(cfg.window));
  }
  if (cfg.channels < 1 || cfg.guidance_channels < 1) throw ConfigError("channel counts must be positive");
}

template <typename T>
ad::ParamSet<T> init_params(const MspnConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  const int in = 1 + cfg.guidance_channels, L = cfg.channels;
  ad::ParamSet<T> p;
  const T beta = static_cast<T>(std::sqrt(kInitMaskedKeyBonus / L));
  for (const char* proj : {"f_q.", "f_k."}) {
    const std::string s = proj;
    p.add(s + "weight", ad::uniform_fan_in<T>({L, in, 1, 1}, in, rng));
    p.add(s + "bias", Tensor<T>({L}));
    p.add(s + "norm.gamma", Tensor<T>({L}, T(1)));
    p.add(s + "norm.beta", Tensor<T>({L}, beta));
  }
  const int r = cfg.window / 2;
  Tensor<T> rel({cfg.window * cfg.window});
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      rel[(dy + r) * cfg.window + (dx + r)] = static_cast<T>(-kInitDistanceSlope * std::max(std::abs(dy), std::abs(dx)));
  p.add("rel_bias", std::move(rel));
  return p;
}

template <typename T>
Tensor<T> init_mask(const Tensor<T>& sparse) {
  Tensor<T> m(sparse.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sparse[i] > T(0) ? T(1) : T(0);
  return m;
}

template <typename T>
Tensor<T> clamp_seeds(const Tensor<T>& depth, const Tensor<T>& sparse, const Tensor<T>& seed_mask) {
  ad::Tape<T> tape(false);
  return clamp_seeds(tape.constant(depth), tape.constant(sparse), tape.constant(seed_mask)).value();
}

template <typename T>
Tensor<T> blend(const Tensor<T>& d_tilde, const Tensor<T>& refined, const Tensor<T>& mask) {
  ad::Tape<T> tape(false);
  return blend(tape.constant(d_tilde), tape.constant(refined), tape.constant(mask)).value();
}

template <typename T>
ad::Var<T> clamp_seeds(const ad::Var<T>& depth, const ad::Var<T>& sparse, const ad::Var<T>& seed_mask) {
  check_binary(seed_mask.value());
  // With a binary gate the blend is an exact select, so seeds come back bit-for-bit.
  return ad::lerp(depth, sparse, seed_mask);
}

template <typename T>
QueryKey<T> project_qk(const ad::Var<T>& d_tilde, const ad::Var<T>& guidance, const ad::Var<T>& mask,
                       const ad::ParamScope<T>& params, const DepthNorm& norm) {
  ad::Tape<T>& tape = d_tilde.tape();
  const ad::Var<T> depth_in =
      norm == DepthNorm{} ? d_tilde
                          : ad::affine(d_tilde, static_cast<T>(1.0 / norm.scale), static_cast<T>(-norm.center / norm.scale));
  const ad::Var<T> x = ad::concat<T>({depth_in, guidance});
  auto project = [&](const std::string& name) {
    const auto s = params.sub(name);
    const ad::Var<T> lin = ad::conv2d(x, s(tape, "weight"), s(tape, "bias"), 1, 0);
    return ad::layer_norm(lin, s(tape, "norm.gamma"), s(tape, "norm.beta"), T(kLayerNormEps));
  };
  QueryKey<T> out;
  out.query = project("f_q.");
  out.key = ad::mul_plane(project("f_k."), mask);
  return out;
}

template <typename T>
Propagated<T> propagate(const ad::Var<T>& attn, const ad::Var<T>& d_tilde, const ad::Var<T>& mask, int p) {
  return {ad::window_aggregate(attn, d_tilde, p), ad::window_aggregate(attn, mask, p)};
}

template <typename T>
ad::Var<T> blend(const ad::Var<T>& d_tilde, const ad::Var<T>& refined, const ad::Var<T>& mask) {
  check_unit_range(mask.value());
  return ad::lerp(d_tilde, refined, mask);
}

template <typename T>
StepState<T> step(const StepState<T>& state, const ad::Var<T>& sparse, const ad::Var<T>& seed_mask,
                  const ad::Var<T>& guidance, const ad::ParamScope<T>& params, const StepOptions& opts) {
  ad::Tape<T>& tape = state.depth.tape();
  const ad::Var<T> d_tilde = clamp_seeds(state.depth, sparse, seed_mask);
  const QueryKey<T> qk = project_qk(d_tilde, guidance, state.mask, params, opts.depth_norm);
  const ad::Var<T> attn = ad::window_attention(qk.query, qk.key, params(tape, "rel_bias"), opts.window);
  const Propagated<T> prop = propagate(attn, d_tilde, state.mask, opts.window);
  StepState<T> next;
  next.depth = blend(d_tilde, prop.refined, state.mask);
  // A convex combination of values in [0, 1], up to rounding.
  next.mask = opts.update_mask ? ad::clamp_unit(prop.mask) : state.mask;
  return next;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> step(const Tensor<T>& depth, const Tensor<T>& mask, const Tensor<T>& sparse,
                                     const Tensor<T>& guidance, const ad::ParamSet<T>& params,
                                     const StepOptions& opts) {
  ad::Tape<T> tape(false);
  StepState<T> s{tape.constant(depth), tape.constant(mask)};
  const auto seeds = tape.constant(init_mask(sparse));
  const auto out = step(s, tape.constant(sparse), seeds, tape.constant(guidance), ad::ParamScope<T>{&params, ""},
                        opts);
  return {out.depth.value(), out.mask.value()};
}

std::pair<Tensor<double>, Tensor<double>> reference_step(const Tensor<double>& depth, const Tensor<double>& mask,
                                                         const Tensor<double>& sparse,
                                                         const Tensor<double>& guidance,
                                                         const ad::ParamSet<double>& params, int p,
                                                         const DepthNorm& norm, double eps) {
  const int H = depth.dim(0), W = depth.dim(1), C = guidance.dim(0), r = p / 2;
  const int L = params.at("f_q.bias").dim(0);

  Tensor<double> d_tilde({H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) d_tilde.at(i, j) = sparse.at(i, j) > 0 ? sparse.at(i, j) : depth.at(i, j);

  // Per-pixel projected + normalized features.
  auto project = [&](const std::string& pre, int i, int j) {
    const auto& w = params.at(pre + "weight");
    const auto& b = params.at(pre + "bias");
    const auto& g = params.at(pre + "norm.gamma");
    const auto& be = params.at(pre + "norm.beta");
    std::vector<double> v(L);
    for (int l = 0; l < L; ++l) {
      double s = b[l] + w[static_cast<std::size_t>(l) * (C + 1)] * norm.apply(d_tilde.at(i, j));
      for (int c = 0; c < C; ++c) s += w[static_cast<std::size_t>(l) * (C + 1) + 1 + c] * guidance.at(c, i, j);
      v[l] = s;
    }
    double mu = 0, var = 0;
    for (double x : v) mu += x;
    mu /= L;
    for (double x : v) var += (x - mu) * (x - mu);
    var /= L;
    for (int l = 0; l < L; ++l) v[l] = g[l] * (v[l] - mu) / std::sqrt(var + eps) + be[l];
    return v;
  };

  const auto& rel = params.at("rel_bias");
  Tensor<double> out_depth({H, W}), out_mask({H, W});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::vector<double> q = project("f_q.", i, j);
      std::vector<double> logits;
      std::vector<double> depths, masks;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int ni = i + dy, nj = j + dx;
          if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
          const std::vector<double> k = project("f_k.", ni, nj);
          double s = rel[(dy + r) * p + (dx + r)];
          for (int l = 0; l < L; ++l) s += q[l] * k[l] * mask.at(ni, nj);
          logits.push_back(s);
          depths.push_back(d_tilde.at(ni, nj));
          masks.push_back(mask.at(ni, nj));
        }
      }
      double mx = logits[0];
      for (double s : logits) mx = std::max(mx, s);
      double z = 0;
      for (double s : logits) z += std::exp(s - mx);
      double refined = 0, m_next = 0;
      for (std::size_t t = 0; t < logits.size(); ++t) {
        const double a = std::exp(logits[t] - mx) / z;
        refined += a * depths[t];
        m_next += a * masks[t];
      }
      const double m = mask.at(i, j);
      out_depth.at(i, j) = (1.0 - m) * d_tilde.at(i, j) + m * refined;
      out_mask.at(i, j) = m_next;
    }
  }
  return {out_depth, out_mask};
}

#define SDR_INSTANTIATE_MSPN(T)                                                                                \
  template ad::ParamSet<T> init_params<T>(const MspnConfig&, std::uint64_t);                                   \
  template Tensor<T> init_mask(const Tensor<T>&);                                                              \
  template Tensor<T> clamp_seeds(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> blend(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template ad::Var<T> clamp_seeds(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&);                   \
  template QueryKey<T> project_qk(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,                     \
                                  const ad::ParamScope<T>&, const DepthNorm&);                                 \
  template Propagated<T> propagate(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&, int);              \
  template ad::Var<T> blend(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&);                          \
  template StepState<T> step(const StepState<T>&, const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,     \
                             const ad::ParamScope<T>&, const StepOptions&);                                    \
  template std::pair<Tensor<T>, Tensor<T>> step(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                                const Tensor<T>&, const ad::ParamSet<T>&, const StepOptions&);

SDR_INSTANTIATE_MSPN(float)
SDR_INSTANTIATE_MSPN(double)

}  // namespace sdr::mspn
