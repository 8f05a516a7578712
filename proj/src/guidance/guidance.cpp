#include "sdr/guidance/guidance.hpp"

#include "sdr/engine/init.hpp"
#include "sdr/engine/ops.hpp"
#include "sdr/mspn/mspn.hpp"

namespace sdr::guidance {
namespace {

template <typename T>
void add_conv(ad::ParamSet<T>& p, Rng& rng, const std::string& name, int cout, int cin, int k) {
  p.add(name + ".weight", ad::uniform_fan_in<T>({cout, cin, k, k}, cin * k * k, rng));
  p.add(name + ".bias", Tensor<T>({cout}));
}

template <typename T>
void add_up(ad::ParamSet<T>& p, Rng& rng, const std::string& name, int cin, int cout) {
  p.add(name + ".weight", ad::uniform_fan_in<T>({cin, cout, 3, 3}, cin * 9, rng));
  p.add(name + ".bias", Tensor<T>({cout}));
  p.add(name + ".norm.gamma", Tensor<T>({cout}, T(1)));
  p.add(name + ".norm.beta", Tensor<T>({cout}));
}

template <typename T>
ad::Var<T> conv(const ad::Var<T>& x, const ad::ParamScope<T>& s, const std::string& name, int stride) {
  ad::Tape<T>& tape = x.tape();
  const int k = s.set->at(s.prefix + name + ".weight").dim(2);
  return ad::conv2d(x, s(tape, name + ".weight"), s(tape, name + ".bias"), stride, k / 2);
}

template <typename T>
ad::Var<T> up(const ad::Var<T>& x, const ad::ParamScope<T>& s, const std::string& name) {
  ad::Tape<T>& tape = x.tape();
  const ad::Var<T> y = ad::conv_transpose2d(x, s(tape, name + ".weight"), s(tape, name + ".bias"), 2, 1, 1);
  return ad::relu(ad::layer_norm(y, s(tape, name + ".norm.gamma"), s(tape, name + ".norm.beta"), T(1e-5)));
}

template <typename T>
void check_inputs(const ad::Var<T>& image, const ad::Var<T>& sparse, const ad::Var<T>& d0) {
  const auto& iv = image.value();
  if (iv.rank() != 3 || iv.dim(0) != 3) throw ConfigError("guidance: image must be 3×H×W, got " + shape_str(iv.shape()));
  const Shape plane{iv.dim(1), iv.dim(2)};
  require_same_shape(plane, sparse.shape(), "guidance: image vs sparse depth");
  require_same_shape(plane, d0.shape(), "guidance: image vs initial depth");
}

// Shared encoder/decoder trunk; returns the full-resolution decoder features
// at the padded size.
template <typename T>
ad::Var<T> trunk(const ad::Var<T>& image, const ad::Var<T>& sparse, const ad::Var<T>& d0,
                 const ad::ParamScope<T>& params, const DepthNorm& norm, bool has_d0) {
  ad::Tape<T>& tape = image.tape();
  const int H = image.value().dim(1), W = image.value().dim(2);
  const int pad_h = (kSizeMultiple - H % kSizeMultiple) % kSizeMultiple;
  const int pad_w = (kSizeMultiple - W % kSizeMultiple) % kSizeMultiple;
  auto pad = [&](const ad::Var<T>& v) { return pad_h || pad_w ? ad::pad_reflect(v, pad_h, pad_w) : v; };

  const ad::Var<T> seeds = tape.constant(mspn::init_mask(sparse.value()), "seed_mask");
  ad::Var<T> s_in = sparse, d_in = d0;
  if (!(norm == DepthNorm{})) {
    const T a = static_cast<T>(1.0 / norm.scale), b = static_cast<T>(-norm.center / norm.scale);
    s_in = ad::mul(seeds, ad::affine(sparse, a, b));
    if (has_d0) d_in = ad::affine(d0, a, b);
  }
  const ad::Var<T> hf = extract_high_freq(pad(image), params);
  const ad::Var<T> x = ad::concat<T>({hf, pad(s_in), pad(seeds), pad(d_in)});

  const ad::Var<T> s0 = ad::relu(conv(x, params, "stem", 1));
  const ad::Var<T> s1 = ad::relu(conv(s0, params, "down1", 2));
  const ad::Var<T> s2 = ad::relu(conv(s1, params, "down2", 2));
  const ad::Var<T> s3 = ad::relu(conv(s2, params, "down3", 2));

  const ad::Var<T> u3 = ad::concat<T>({up(s3, params, "up3"), s2});
  const ad::Var<T> u2 = ad::concat<T>({up(u3, params, "up2"), s1});
  return ad::concat<T>({up(u2, params, "up1"), s0});
}

template <typename T>
ad::Var<T> crop_to(const ad::Var<T>& v, int H, int W) {
  return v.value().height() == H && v.value().width() == W ? v : ad::crop(v, H, W);
}

}  // namespace

template <typename T>
ad::ParamSet<T> init_params(const GuidanceConfig& cfg, std::uint64_t seed) {
  const auto [w0, w1, w2] = cfg.widths;
  if (cfg.hf_channels < 1 || w0 < 1 || w1 < 1 || w2 < 1 || cfg.out_channels < 1) {
    throw ConfigError("guidance: channel counts must be positive");
  }
  Rng rng(seed);
  ad::ParamSet<T> p;
  add_conv(p, rng, "hf.conv3", cfg.hf_channels, 3, 3);
  add_conv(p, rng, "hf.conv1", cfg.hf_channels, 3, 1);
  add_conv(p, rng, "stem", w0, cfg.hf_channels + 3, 3);
  add_conv(p, rng, "down1", w1, w0, 3);
  add_conv(p, rng, "down2", w2, w1, 3);
  add_conv(p, rng, "down3", w2, w2, 3);
  add_up(p, rng, "up3", w2, w2);
  add_up(p, rng, "up2", 2 * w2, w1);
  add_up(p, rng, "up1", 2 * w1, w0);
  add_conv(p, rng, "out", cfg.out_channels, 2 * w0, 3);
  if (cfg.depth_head) add_conv(p, rng, "head", 1, 2 * w0, 3);
  return p;
}

template <typename T>
ad::Var<T> extract_high_freq(const ad::Var<T>& image, const ad::ParamScope<T>& params) {
  return ad::sub(conv(image, params, "hf.conv3", 1), conv(image, params, "hf.conv1", 1));
}

template <typename T>
ad::Var<T> guidance_forward(const ad::Var<T>& image, const ad::Var<T>& sparse, const ad::Var<T>& d0,
                            const ad::ParamScope<T>& params, const DepthNorm& norm) {
  check_inputs(image, sparse, d0);
  const ad::Var<T> features = trunk(image, sparse, d0, params, norm, true);
  return crop_to(conv(features, params, "out", 1), image.value().dim(1), image.value().dim(2));
}

template <typename T>
GuidanceWithDepth<T> predict_initial_depth(const ad::Var<T>& image, const ad::Var<T>& sparse,
                                           const ad::ParamScope<T>& params, const DepthNorm& norm) {
  if (!params.has("head.weight")) throw ConfigError("guidance: depth head requested but not configured");
  const ad::Var<T> zero_depth = image.tape().constant(Tensor<T>(sparse.shape()), "no_initial_depth");
  check_inputs(image, sparse, zero_depth);
  const int H = image.value().dim(1), W = image.value().dim(2);
  // The absent D0 channel stays exactly zero, even when S is standardized.
  const ad::Var<T> features = trunk(image, sparse, zero_depth, params, norm, false);
  GuidanceWithDepth<T> out;
  out.guidance = crop_to(conv(features, params, "out", 1), H, W);
  const ad::Var<T> head = ad::softplus(conv(features, params, "head", 1));
  out.depth = ad::reshape(crop_to(head, H, W), {H, W});
  return out;
}

template <typename T>
Tensor<T> extract_high_freq(const Tensor<T>& image, const ad::ParamSet<T>& params) {
  ad::Tape<T> tape(false);
  return extract_high_freq(tape.constant(image), ad::ParamScope<T>{&params, ""}).value();
}

template <typename T>
Tensor<T> guidance_forward(const Tensor<T>& image, const Tensor<T>& sparse, const Tensor<T>& d0,
                           const ad::ParamSet<T>& params, const DepthNorm& norm) {
  ad::Tape<T> tape(false);
  return guidance_forward(tape.constant(image), tape.constant(sparse), tape.constant(d0),
                          ad::ParamScope<T>{&params, ""}, norm)
      .value();
}

#define SDR_INSTANTIATE_GUIDANCE(T)                                                                           \
  template ad::ParamSet<T> init_params<T>(const GuidanceConfig&, std::uint64_t);                              \
  template ad::Var<T> extract_high_freq(const ad::Var<T>&, const ad::ParamScope<T>&);                         \
  template ad::Var<T> guidance_forward(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,               \
                                       const ad::ParamScope<T>&, const DepthNorm&);                           \
  template GuidanceWithDepth<T> predict_initial_depth(const ad::Var<T>&, const ad::Var<T>&,                   \
                                                      const ad::ParamScope<T>&, const DepthNorm&);            \
  template Tensor<T> extract_high_freq(const Tensor<T>&, const ad::ParamSet<T>&);                             \
  template Tensor<T> guidance_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                      const ad::ParamSet<T>&, const DepthNorm&);

SDR_INSTANTIATE_GUIDANCE(float)
SDR_INSTANTIATE_GUIDANCE(double)

}  // namespace sdr::guidance
