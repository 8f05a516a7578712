#pragma once

// Data-parallel forward/backward kernels. Every output element is produced by
// exactly one thread with a fixed summation order, and cross-pixel reductions
// are done per row and then summed in row order, so results do not depend on
// the thread count.

#include "sdr/tensor.hpp"

namespace sdr::kernels {

inline int conv_out_size(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}
inline int conv_transpose_out_size(int in, int k, int stride, int padding, int output_padding) {
  return (in - 1) * stride - 2 * padding + k + output_padding;
}

// x: Cin×H×W, w: Cout×Cin×k×k, bias: Cout or empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int padding);

// Any of gx/gw/gb may be null. Results are accumulated (+=) into the targets.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride, int padding,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

// x: Cin×H×W, w: Cin×Cout×k×k, bias: Cout or empty.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                           int padding, int output_padding);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride,
                               int padding, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

// Normalizes the channel vector at every pixel. mean/rstd receive H×W statistics.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     Tensor<T>* mean, Tensor<T>* rstd);

template <typename T>
void layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& mean,
                         const Tensor<T>& rstd, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>* ggamma,
                         Tensor<T>* gbeta);

// Window offsets are enumerated row-major: t = (dy + r) * p + (dx + r), r = p / 2.
// q, k: L×H×W. bias: p². Returns p²×H×W softmax weights over in-bounds offsets;
// out-of-bounds offsets get exactly 0.
template <typename T>
Tensor<T> window_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& bias, int p);

template <typename T>
void window_attention_backward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& attn,
                               const Tensor<T>& gattn, int p, Tensor<T>* gq, Tensor<T>* gk, Tensor<T>* gbias);

// out(i,j) = sum_t attn(t,i,j) * field(i+dy_t, j+dx_t), in-bounds offsets only. field: H×W.
template <typename T>
Tensor<T> window_aggregate(const Tensor<T>& attn, const Tensor<T>& field, int p);

template <typename T>
void window_aggregate_backward(const Tensor<T>& attn, const Tensor<T>& field, const Tensor<T>& gy, int p,
                               Tensor<T>* gattn, Tensor<T>* gfield);

// Serial, loop-for-loop reference versions used by tests and the benchmark.
namespace reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int padding);

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                           int padding, int output_padding);

template <typename T>
Tensor<T> window_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& bias, int p);

template <typename T>
Tensor<T> window_aggregate(const Tensor<T>& attn, const Tensor<T>& field, int p);

}  // namespace reference

// Number of OpenMP threads kernels will use (1 without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace sdr::kernels
