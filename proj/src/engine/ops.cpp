#include "sdr/engine/ops.hpp"

#include <algorithm>
#include <cmath>

#include "sdr/kernels/kernels.hpp"

namespace sdr::ad {
namespace {

template <typename T>
void add_into(Tensor<T>* dst, const Tensor<T>& src, T factor = T(1)) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += factor * src[i];
}

template <typename T>
const Tensor<T>& none() {
  static const Tensor<T> empty;
  return empty;
}

template <typename T>
Tensor<T> as_chw(const Tensor<T>& t) {
  return t.rank() == 3 ? t : t.reshaped({1, t.dim(0), t.dim(1)});
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  add_into(&out, b.value());
  return a.tape().make("add", std::move(out), {a, b}, [](Node<T>& n) {
    add_into(n.input_grad(0), n.grad);
    add_into(n.input_grad(1), n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  add_into(&out, b.value(), T(-1));
  return a.tape().make("sub", std::move(out), {a, b}, [](Node<T>& n) {
    add_into(n.input_grad(0), n.grad);
    add_into(n.input_grad(1), n.grad, T(-1));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().make("mul", std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    if (auto* g = n.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    if (auto* g = n.input_grad(1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= factor;
  return a.tape().make("scale", std::move(out), {a}, [factor](Node<T>& n) {
    add_into(n.input_grad(0), n.grad, factor);
  });
}

template <typename T>
Var<T> affine(const Var<T>& a, T factor, T offset) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = factor * v + offset;
  return a.tape().make("affine", std::move(out), {a}, [factor](Node<T>& n) {
    add_into(n.input_grad(0), n.grad, factor);
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().vec()) s += v;
  return a.tape().make("sum", Tensor<T>({1}, s), {a}, [](Node<T>& n) {
    if (auto* g = n.input_grad(0))
      for (auto& v : g->vec()) v += n.grad[0];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::max(v, T(0));
  return a.tape().make("relu", std::move(out), {a}, [](Node<T>& n) {
    if (auto* g = n.input_grad(0)) {
      const auto& x = n.inputs[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i)
        if (x[i] > T(0)) (*g)[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> clamp_unit(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::clamp(v, T(0), T(1));
  return a.tape().make("clamp_unit", std::move(out), {a}, [](Node<T>& n) {
    if (auto* g = n.input_grad(0)) {
      const auto& x = n.inputs[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i)
        if (x[i] >= T(0) && x[i] <= T(1)) (*g)[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v > T(20) ? v : std::log1p(std::exp(v));
  return a.tape().make("softplus", std::move(out), {a}, [](Node<T>& n) {
    if (auto* g = n.input_grad(0)) {
      const auto& x = n.inputs[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] / (T(1) + std::exp(-x[i]));
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int padding) {
  const bool has_bias = static_cast<bool>(bias);
  Tensor<T> out = kernels::conv2d(x.value(), w.value(), has_bias ? bias.value() : none<T>(), stride, padding);
  std::vector<Var<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return x.tape().make("conv2d", std::move(out), inputs, [stride, padding, has_bias](Node<T>& n) {
    kernels::conv2d_backward(n.inputs[0]->value, n.inputs[1]->value, n.grad, stride, padding, n.input_grad(0),
                             n.input_grad(1), has_bias ? n.input_grad(2) : nullptr);
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int padding,
                        int output_padding) {
  const bool has_bias = static_cast<bool>(bias);
  Tensor<T> out = kernels::conv_transpose2d(x.value(), w.value(), has_bias ? bias.value() : none<T>(), stride,
                                            padding, output_padding);
  std::vector<Var<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return x.tape().make("conv_transpose2d", std::move(out), inputs, [stride, padding, has_bias](Node<T>& n) {
    kernels::conv_transpose2d_backward(n.inputs[0]->value, n.inputs[1]->value, n.grad, stride, padding,
                                       n.input_grad(0), n.input_grad(1), has_bias ? n.input_grad(2) : nullptr);
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  auto mean = std::make_shared<Tensor<T>>();
  auto rstd = std::make_shared<Tensor<T>>();
  Tensor<T> out = kernels::layer_norm(x.value(), gamma.value(), beta.value(), eps, mean.get(), rstd.get());
  return x.tape().make("layer_norm", std::move(out), {x, gamma, beta}, [mean, rstd](Node<T>& n) {
    kernels::layer_norm_backward(n.inputs[0]->value, n.inputs[1]->value, *mean, *rstd, n.grad, n.input_grad(0),
                                 n.input_grad(1), n.input_grad(2));
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const int H = parts[0].value().height(), W = parts[0].value().width();
  int C = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (v.rank() < 2 || v.rank() > 3 || v.height() != H || v.width() != W) {
      throw ConfigError("concat: spatial mismatch " + shape_str(v.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    C += v.channels();
  }
  Tensor<T> out({C, H, W});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return parts[0].tape().make("concat", std::move(out), parts, [](Node<T>& n) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const std::size_t len = n.inputs[i]->value.size();
      if (auto* g = n.input_grad(i))
        for (std::size_t j = 0; j < len; ++j) (*g)[j] += n.grad[off + j];
      off += len;
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  return x.tape().make("reshape", x.value().reshaped(std::move(shape)), {x}, [](Node<T>& n) {
    if (auto* g = n.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
  });
}

template <typename T>
Var<T> pad_reflect(const Var<T>& x, int bottom, int right) {
  const Tensor<T> in = as_chw(x.value());
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  if (bottom < 0 || right < 0 || bottom >= H || right >= W) {
    throw ConfigError("pad_reflect: padding (" + std::to_string(bottom) + ", " + std::to_string(right) +
                      ") too large for " + shape_str(x.shape()));
  }
  const int Ho = H + bottom, Wo = W + right;
  // Source row/col for each output row/col.
  auto src_index = [](int o, int n) { return o < n ? o : 2 * (n - 1) - o; };
  Tensor<T> out({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) out.at(c, i, j) = in.at(c, src_index(i, H), src_index(j, W));
  const bool was_plane = x.value().rank() == 2;
  if (was_plane) out = out.reshaped({Ho, Wo});
  return x.tape().make("pad_reflect", std::move(out), {x}, [C, H, W, Ho, Wo, src_index](Node<T>& n) {
    if (auto* g = n.input_grad(0)) {
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < Ho; ++i)
          for (int j = 0; j < Wo; ++j)
            (*g)[(static_cast<std::size_t>(c) * H + src_index(i, H)) * W + src_index(j, W)] +=
                n.grad[(static_cast<std::size_t>(c) * Ho + i) * Wo + j];
    }
  });
}

template <typename T>
Var<T> crop(const Var<T>& x, int h, int w) {
  const Tensor<T> in = as_chw(x.value());
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  if (h < 1 || w < 1 || h > H || w > W) {
    throw ConfigError("crop: " + std::to_string(h) + "x" + std::to_string(w) + " outside " + shape_str(x.shape()));
  }
  Tensor<T> out({C, h, w});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out.at(c, i, j) = in.at(c, i, j);
  if (x.value().rank() == 2) out = out.reshaped({h, w});
  return x.tape().make("crop", std::move(out), {x}, [C, H, W, h, w](Node<T>& n) {
    if (auto* g = n.input_grad(0)) {
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            (*g)[(static_cast<std::size_t>(c) * H + i) * W + j] += n.grad[(static_cast<std::size_t>(c) * h + i) * w + j];
    }
  });
}

template <typename T>
Var<T> mul_plane(const Var<T>& x, const Var<T>& plane) {
  const auto& xv = x.value();
  const auto& pv = plane.value();
  if (xv.rank() != 3 || pv.rank() != 2 || xv.dim(1) != pv.dim(0) || xv.dim(2) != pv.dim(1)) {
    throw ConfigError("mul_plane: cannot scale " + shape_str(xv.shape()) + " by " + shape_str(pv.shape()));
  }
  const std::size_t hw = pv.size();
  const int L = xv.dim(0);
  Tensor<T> out = xv;
  for (int c = 0; c < L; ++c)
    for (std::size_t px = 0; px < hw; ++px) out[c * hw + px] *= pv[px];
  return x.tape().make("mul_plane", std::move(out), {x, plane}, [L, hw](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    const auto& pv = n.inputs[1]->value;
    if (auto* g = n.input_grad(0))
      for (int c = 0; c < L; ++c)
        for (std::size_t px = 0; px < hw; ++px) (*g)[c * hw + px] += n.grad[c * hw + px] * pv[px];
    if (auto* g = n.input_grad(1))
      for (int c = 0; c < L; ++c)
        for (std::size_t px = 0; px < hw; ++px) (*g)[px] += n.grad[c * hw + px] * xv[c * hw + px];
  });
}

template <typename T>
Var<T> lerp(const Var<T>& a, const Var<T>& b, const Var<T>& m) {
  require_same_shape(a.shape(), b.shape(), "lerp");
  require_same_shape(a.shape(), m.shape(), "lerp gate");
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto& mv = m.value();
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (T(1) - mv[i]) * av[i] + mv[i] * bv[i];
  return a.tape().make("lerp", std::move(out), {a, b, m}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    const auto& mv = n.inputs[2]->value;
    if (auto* g = n.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * (T(1) - mv[i]);
    if (auto* g = n.input_grad(1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * mv[i];
    if (auto* g = n.input_grad(2))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * (bv[i] - av[i]);
  });
}

template <typename T>
Var<T> window_attention(const Var<T>& q, const Var<T>& k, const Var<T>& bias, int p) {
  Tensor<T> out = kernels::window_attention(q.value(), k.value(), bias.value(), p);
  return q.tape().make("window_attention", std::move(out), {q, k, bias}, [p](Node<T>& n) {
    kernels::window_attention_backward(n.inputs[0]->value, n.inputs[1]->value, n.value, n.grad, p,
                                       n.input_grad(0), n.input_grad(1), n.input_grad(2));
  });
}

template <typename T>
Var<T> window_aggregate(const Var<T>& attn, const Var<T>& field, int p) {
  Tensor<T> out = kernels::window_aggregate(attn.value(), field.value(), p);
  return attn.tape().make("window_aggregate", std::move(out), {attn, field}, [p](Node<T>& n) {
    kernels::window_aggregate_backward(n.inputs[0]->value, n.inputs[1]->value, n.grad, p, n.input_grad(0),
                                       n.input_grad(1));
  });
}

#define SDR_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> scale(const Var<T>&, T);                                                              \
  template Var<T> affine(const Var<T>&, T, T);                                                          \
  template Var<T> sum(const Var<T>&);                                                                   \
  template Var<T> relu(const Var<T>&);                                                                  \
  template Var<T> clamp_unit(const Var<T>&);                                                            \
  template Var<T> softplus(const Var<T>&);                                                              \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                        \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int);         \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                           \
  template Var<T> concat(const std::vector<Var<T>>&);                                                   \
  template Var<T> reshape(const Var<T>&, Shape);                                                        \
  template Var<T> pad_reflect(const Var<T>&, int, int);                                                 \
  template Var<T> crop(const Var<T>&, int, int);                                                        \
  template Var<T> mul_plane(const Var<T>&, const Var<T>&);                                              \
  template Var<T> lerp(const Var<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> window_attention(const Var<T>&, const Var<T>&, const Var<T>&, int);                   \
  template Var<T> window_aggregate(const Var<T>&, const Var<T>&, int);

SDR_INSTANTIATE_OPS(float)
SDR_INSTANTIATE_OPS(double)

}  // namespace sdr::ad
