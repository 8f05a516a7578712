#pragma once

// Differentiable ops over Var. Only what the guidance network, the
// propagation step and the losses need.

#include <vector>

#include "sdr/engine/tape.hpp"

namespace sdr::ad {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
// factor * a + offset
template <typename T>
Var<T> affine(const Var<T>& a, T factor, T offset);
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> relu(const Var<T>& a);
// Clips to [0, 1]; gradient passes wherever the input was already inside.
template <typename T>
Var<T> clamp_unit(const Var<T>& a);
template <typename T>
Var<T> softplus(const Var<T>& a);

// bias may be a null Var.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int padding);
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int padding,
                        int output_padding);

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

// Channel concatenation; rank-2 inputs count as one channel.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// Reflect-pads the bottom and right edges of a C×H×W tensor.
template <typename T>
Var<T> pad_reflect(const Var<T>& x, int bottom, int right);
// Keeps the top-left h×w region.
template <typename T>
Var<T> crop(const Var<T>& x, int h, int w);

// x: L×H×W scaled per pixel by plane: H×W.
template <typename T>
Var<T> mul_plane(const Var<T>& x, const Var<T>& plane);

// (1 - m) * a + m * b, all H×W.
template <typename T>
Var<T> lerp(const Var<T>& a, const Var<T>& b, const Var<T>& m);

template <typename T>
Var<T> window_attention(const Var<T>& q, const Var<T>& k, const Var<T>& bias, int p);
template <typename T>
Var<T> window_aggregate(const Var<T>& attn, const Var<T>& field, int p);

}  // namespace sdr::ad
