#include "sdr/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "sdr/engine/ops.hpp"
#include "sdr/mspn/mspn.hpp"
#include "sdr/rng.hpp"

namespace sdr::pipeline {
namespace {

template <typename T>
double coverage(const Tensor<T>& mask) {
  std::size_t n = 0;
  for (T v : mask.vec()) n += v > T(0);
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

template <typename T>
double rmse(const Tensor<T>& pred, const Tensor<T>& gt) {
  double se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > T(0))) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    se += d * d;
    ++n;
  }
  return n ? std::sqrt(se / static_cast<double>(n)) : -1.0;
}

}  // namespace

SampleMode parse_sample_mode(const std::string& s) {
  if (s == "points") return SampleMode::Points;
  if (s == "lines") return SampleMode::Lines;
  throw ConfigError("unknown sampling mode '" + s + "' (expected points or lines)");
}

std::string to_string(SampleMode m) { return m == SampleMode::Points ? "points" : "lines"; }

void validate(const RefineConfig& cfg) {
  if (cfg.window < 1 || cfg.window % 2 == 0) {
    throw ConfigError("refine: window must be odd and >= 1, got " + std::to_string(cfg.window));
  }
  if (!(cfg.kappa > 0) || !std::isfinite(cfg.kappa)) throw ConfigError("refine: kappa must be positive");
  if (cfg.min_iters < 1) throw ConfigError("refine: min_iters must be >= 1");
  if (cfg.second_layer_iters < 0) throw ConfigError("refine: second_layer_iters must be >= 0");
  if (cfg.max_layer1_iters < 0) throw ConfigError("refine: max_layer1_iters must be >= 0");
}

Schedule iteration_count(std::size_t s, int H, int W, const RefineConfig& cfg) {
  validate(cfg);
  if (H < 1 || W < 1) throw ConfigError("schedule: image size must be positive");
  if (s == 0) throw DataError("schedule: no valid sparse pixels");
  Schedule out;
  const double area = static_cast<double>(H) * static_cast<double>(W);
  out.nu_s = std::max(0.0, std::sqrt(area / static_cast<double>(s)) - 1.0);
  const double reach = cfg.window / 2.0 - 1.0;
  int n1 = cfg.min_iters;
  if (reach > 0) {
    const double raw = std::ceil(cfg.kappa * out.nu_s / reach);
    n1 = std::max(cfg.min_iters, static_cast<int>(std::min(raw, 1e9)));
  }
  if (cfg.max_layer1_iters > 0) n1 = std::min(n1, cfg.max_layer1_iters);
  out.n_layer1 = n1;
  out.n_layer2 = cfg.second_layer_iters;
  return out;
}

template <typename T>
std::size_t count_valid(const Tensor<T>& sparse) {
  std::size_t n = 0;
  for (T v : sparse.vec()) n += v > T(0);
  return n;
}

template <typename T>
int count_lines(const Tensor<T>& sparse) {
  int lines = 0;
  for (int i = 0; i < sparse.height(); ++i) {
    for (int j = 0; j < sparse.width(); ++j) {
      if (sparse.at(i, j) > T(0)) {
        ++lines;
        break;
      }
    }
  }
  return lines;
}

template <typename T>
Schedule iteration_count_lines(const Tensor<T>& sparse, int n_lines, const RefineConfig& cfg) {
  if (n_lines < 1) throw ConfigError("schedule: n_lines must be >= 1");
  const std::size_t valid = count_valid(sparse);
  if (valid == 0) throw DataError("schedule: no valid sparse pixels on any line");
  const double per_line = static_cast<double>(valid) / n_lines;
  const auto s_eff = static_cast<std::size_t>(std::max<long long>(1, std::llround(per_line) * n_lines));
  return iteration_count(s_eff, sparse.height(), sparse.width(), cfg);
}

template <typename T>
ad::ParamSet<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  mspn::MspnConfig layer{cfg.window, cfg.qk_channels, cfg.guidance.out_channels};
  ad::ParamSet<T> p;
  p.merge(guidance::init_params<T>(cfg.guidance, Rng::derive(seed, 0)), kGuidancePrefix);
  p.merge(mspn::init_params<T>(layer, Rng::derive(seed, 1)), kLayer1Prefix);
  p.merge(mspn::init_params<T>(layer, Rng::derive(seed, 2)), kLayer2Prefix);
  return p;
}

template <typename T>
int window_of(const ad::ParamSet<T>& params, const std::string& layer_prefix) {
  const auto n = static_cast<int>(params.at(layer_prefix + "rel_bias").size());
  const int p = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (p * p != n) throw ConfigError(layer_prefix + "rel_bias length " + std::to_string(n) + " is not a square");
  return p;
}

template <typename T>
RefineResult<T> refine(const ad::Var<T>& image, const ad::Var<T>& sparse, const ad::Var<T>& d0,
                       const ad::ParamSet<T>& params, const RefineConfig& cfg, const Tensor<T>* gt,
                       const StepObserver<T>& observer) {
  validate(cfg);
  for (const auto* prefix : {&kLayer1Prefix, &kLayer2Prefix}) {
    const int p = window_of(params, *prefix);
    if (p != cfg.window) {
      throw ConfigError("refine: window " + std::to_string(cfg.window) + " does not match " + *prefix +
                        " parameters built for window " + std::to_string(p));
    }
  }
  ad::Tape<T>& tape = image.tape();
  const Tensor<T>& s_val = sparse.value();
  if (s_val.rank() != 2) throw ConfigError("refine: sparse depth must be H×W, got " + shape_str(s_val.shape()));
  if (gt) require_same_shape(gt->shape(), s_val.shape(), "refine: ground truth vs sparse depth");
  const ad::ParamScope<T> gscope{&params, kGuidancePrefix};

  RefineResult<T> out;
  Diagnostics& diag = out.diagnostics;
  diag.seed_count = count_valid(s_val);

  // Depth inputs to the learned projections are standardized per image, so
  // the features see relative structure rather than absolute meters.
  const DepthNorm norm = DepthNorm::from(d0 ? d0.value() : s_val);
  ad::Var<T> guidance_feat;
  if (d0) {
    out.initial_depth = d0;
  } else {
    auto both = guidance::predict_initial_depth(image, sparse, gscope, norm);
    out.initial_depth = both.depth;
    guidance_feat = both.guidance;
  }
  require_same_shape(out.initial_depth.shape(), s_val.shape(), "refine: initial depth vs sparse depth");

  if (diag.seed_count == 0) {
    diag.warnings.push_back("no valid sparse depths; returning the initial depth unchanged");
    out.depth = out.initial_depth;
    return out;
  }

  const int H = s_val.height(), W = s_val.width();
  if (cfg.mode == SampleMode::Lines) {
    diag.schedule = iteration_count_lines(s_val, count_lines(s_val), cfg);
  } else {
    diag.schedule = iteration_count(diag.seed_count, H, W, cfg);
  }
  diag.scheduled = true;

  // G is computed once and shared by both layers.
  if (!guidance_feat) guidance_feat = guidance::guidance_forward(image, sparse, out.initial_depth, gscope, norm);

  const ad::Var<T> seeds = tape.constant(mspn::init_mask(s_val), "seed_mask");
  const mspn::StepOptions opts{cfg.window, cfg.update_mask, norm};
  mspn::StepState<T> state{out.initial_depth, seeds};
  const int counts[2] = {diag.schedule.n_layer1, diag.schedule.n_layer2};
  const std::string* prefixes[2] = {&kLayer1Prefix, &kLayer2Prefix};
  for (int layer = 0; layer < 2; ++layer) {
    // Each layer starts again from the seed mask.
    state.mask = seeds;
    if (observer) observer(layer + 1, 0, state.depth.value(), state.mask.value());
    const ad::ParamScope<T> scope{&params, *prefixes[layer]};
    for (int it = 1; it <= counts[layer]; ++it) {
      state = mspn::step(state, sparse, seeds, guidance_feat, scope, opts);
      IterationRecord rec;
      rec.layer = layer + 1;
      rec.iteration = it;
      rec.coverage = coverage(state.mask.value());
      if (gt) rec.rmse = rmse(state.depth.value(), *gt);
      diag.iterations.push_back(rec);
      if (observer) observer(layer + 1, it, state.depth.value(), state.mask.value());
    }
  }
  out.depth = cfg.final_seed_clamp ? mspn::clamp_seeds(state.depth, sparse, seeds) : state.depth;
  return out;
}

template <typename T>
RefineOutput<T> refine(const Tensor<T>& image, const Tensor<T>& sparse, const Tensor<T>& d0,
                       const ad::ParamSet<T>& params, const RefineConfig& cfg, const Tensor<T>* gt,
                       const StepObserver<T>& observer) {
  ad::Tape<T> tape(false);
  const ad::Var<T> d0_var = d0.empty() ? ad::Var<T>() : tape.constant(d0, "initial_depth");
  auto r = refine(tape.constant(image, "image"), tape.constant(sparse, "sparse"), d0_var, params, cfg, gt, observer);
  return {r.depth.value(), r.initial_depth.value(), std::move(r.diagnostics)};
}

#define SDR_INSTANTIATE_PIPELINE(T)                                                                             \
  template Schedule iteration_count_lines(const Tensor<T>&, int, const RefineConfig&);                          \
  template int count_lines(const Tensor<T>&);                                                                   \
  template std::size_t count_valid(const Tensor<T>&);                                                           \
  template ad::ParamSet<T> init_model_params<T>(const ModelConfig&, std::uint64_t);                             \
  template int window_of(const ad::ParamSet<T>&, const std::string&);                                           \
  template RefineResult<T> refine(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,                      \
                                  const ad::ParamSet<T>&, const RefineConfig&, const Tensor<T>*,                \
                                  const StepObserver<T>&);                                                      \
  template RefineOutput<T> refine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ad::ParamSet<T>&, \
                                  const RefineConfig&, const Tensor<T>*, const StepObserver<T>&);

SDR_INSTANTIATE_PIPELINE(float)
SDR_INSTANTIATE_PIPELINE(double)

}  // namespace sdr::pipeline
