// Straightforward nested-loop versions of the kernels. Kept deliberately
// unoptimized: these are the oracles the parallel kernels are tested against.

#include <cmath>
#include <vector>

#include "sdr/kernels/kernels.hpp"

namespace sdr::kernels::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int padding) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  const int oh_n = conv_out_size(H, k, stride, padding), ow_n = conv_out_size(W, k, stride, padding);
  Tensor<T> y({cout, oh_n, ow_n});
  for (int co = 0; co < cout; ++co)
    for (int oh = 0; oh < oh_n; ++oh)
      for (int ow = 0; ow < ow_n; ++ow) {
        T s = bias.empty() ? T(0) : bias[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int ih = oh * stride - padding + kh, iw = ow * stride - padding + kw;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              s += w[((static_cast<std::size_t>(co) * cin + ci) * k + kh) * k + kw] * x.at(ci, ih, iw);
            }
        y.at(co, oh, ow) = s;
      }
  return y;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                           int padding, int output_padding) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(1), k = w.dim(2);
  const int oh_n = conv_transpose_out_size(H, k, stride, padding, output_padding);
  const int ow_n = conv_transpose_out_size(W, k, stride, padding, output_padding);
  Tensor<T> y({cout, oh_n, ow_n});
  for (int co = 0; co < cout; ++co)
    for (int oh = 0; oh < oh_n; ++oh)
      for (int ow = 0; ow < ow_n; ++ow) y.at(co, oh, ow) = bias.empty() ? T(0) : bias[co];
  for (int ci = 0; ci < cin; ++ci)
    for (int ih = 0; ih < H; ++ih)
      for (int iw = 0; iw < W; ++iw)
        for (int co = 0; co < cout; ++co)
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int oh = ih * stride - padding + kh, ow = iw * stride - padding + kw;
              if (oh < 0 || oh >= oh_n || ow < 0 || ow >= ow_n) continue;
              y.at(co, oh, ow) += x.at(ci, ih, iw) * w[((static_cast<std::size_t>(ci) * cout + co) * k + kh) * k + kw];
            }
  return y;
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& bias, int p) {
  const int L = q.dim(0), H = q.dim(1), W = q.dim(2), r = p / 2;
  Tensor<T> attn({p * p, H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      std::vector<T> logit(p * p, T(0));
      std::vector<bool> inside(p * p, false);
      T mx = 0;
      bool first = true;
      for (int t = 0; t < p * p; ++t) {
        const int ni = i + t / p - r, nj = j + t % p - r;
        if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
        inside[t] = true;
        T s = bias[t];
        for (int c = 0; c < L; ++c) s += q.at(c, i, j) * k.at(c, ni, nj);
        logit[t] = s;
        if (first || s > mx) mx = s;
        first = false;
      }
      T z = 0;
      for (int t = 0; t < p * p; ++t)
        if (inside[t]) z += std::exp(logit[t] - mx);
      for (int t = 0; t < p * p; ++t) attn.at(t, i, j) = inside[t] ? std::exp(logit[t] - mx) / z : T(0);
    }
  return attn;
}

template <typename T>
Tensor<T> window_aggregate(const Tensor<T>& attn, const Tensor<T>& field, int p) {
  const int H = field.dim(0), W = field.dim(1), r = p / 2;
  Tensor<T> out({H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      T s = 0;
      for (int t = 0; t < p * p; ++t) {
        const int ni = i + t / p - r, nj = j + t % p - r;
        if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
        s += attn.at(t, i, j) * field.at(ni, nj);
      }
      out.at(i, j) = s;
    }
  return out;
}

#define SDR_INSTANTIATE_REFERENCE(T)                                                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);               \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, int); \
  template Tensor<T> window_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);           \
  template Tensor<T> window_aggregate(const Tensor<T>&, const Tensor<T>&, int);

SDR_INSTANTIATE_REFERENCE(float)
SDR_INSTANTIATE_REFERENCE(double)

}  // namespace sdr::kernels::reference
