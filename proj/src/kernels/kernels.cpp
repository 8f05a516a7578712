#include "sdr/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdr::kernels {
namespace {

// Below this many inner-loop operations the fork/join cost dominates.
constexpr long kParallelThreshold = 1L << 15;

void check_conv_shapes(const Shape& xs, const Shape& ws, int cin_axis) {
  if (xs.size() != 3 || ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0 || xs[0] != ws[cin_axis]) {
    throw ConfigError("conv: incompatible input " + shape_str(xs) + " and kernel " + shape_str(ws));
  }
}

template <typename T>
void check_bias(const Tensor<T>& bias, int cout) {
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ConfigError("conv: bias shape " + shape_str(bias.shape()) + " does not match " +
                      std::to_string(cout) + " output channels");
  }
}

// Floor division for possibly negative numerators, positive divisor.
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// First/one-past-last index n with 0 <= n*stride - padding + kk < limit.
inline int range_lo(int padding, int kk, int stride) {
  return std::max(0, -floor_div(kk - padding, stride));
}
inline int range_hi(int count, int limit, int padding, int kk, int stride) {
  return std::min(count, floor_div(limit - 1 + padding - kk, stride) + 1);
}

void check_window(int p) {
  if (p < 1 || p % 2 == 0) throw ConfigError("window size must be odd and >= 1, got " + std::to_string(p));
}

// Pixel-major copy (H×W×L) of an L×H×W field so window dot products are contiguous.
template <typename T>
std::vector<T> to_pixel_major(const Tensor<T>& f) {
  const int L = f.dim(0), H = f.dim(1), W = f.dim(2);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  std::vector<T> out(f.size());
  for (int c = 0; c < L; ++c) {
    const T* src = f.data() + c * hw;
    for (std::size_t x = 0; x < hw; ++x) out[x * L + c] = src[x];
  }
  return out;
}

template <typename T>
void from_pixel_major_add(const std::vector<T>& pm, Tensor<T>* f) {
  const int L = f->dim(0), H = f->dim(1), W = f->dim(2);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < L; ++c) {
    T* dst = f->data() + c * hw;
    for (std::size_t x = 0; x < hw; ++x) dst[x] += pm[x * L + c];
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int padding) {
  check_conv_shapes(x.shape(), w.shape(), 1);
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  check_bias(bias, cout);
  const int oh_n = conv_out_size(H, k, stride, padding), ow_n = conv_out_size(W, k, stride, padding);
  if (oh_n <= 0 || ow_n <= 0) throw ConfigError("conv2d: output would be empty for input " + shape_str(x.shape()));
  Tensor<T> y({cout, oh_n, ow_n});
  const long work = static_cast<long>(cout) * cin * k * k * oh_n * ow_n;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int co = 0; co < cout; ++co) {
    T* yc = y.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
    const T b = bias.empty() ? T(0) : bias[co];
    std::fill(yc, yc + static_cast<std::size_t>(oh_n) * ow_n, b);
    for (int ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + static_cast<std::size_t>(ci) * H * W;
      const T* wk = w.data() + (static_cast<std::size_t>(co) * cin + ci) * k * k;
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          const T wv = wk[kh * k + kw];
          // valid ow range: 0 <= ow*stride - padding + kw < W
          const int ow_lo = range_lo(padding, kw, stride);
          const int ow_hi = range_hi(ow_n, W, padding, kw, stride);
          for (int oh = 0; oh < oh_n; ++oh) {
            const int ih = oh * stride - padding + kh;
            if (ih < 0 || ih >= H) continue;
            const T* xr = xc + static_cast<std::size_t>(ih) * W;
            T* yr = yc + static_cast<std::size_t>(oh) * ow_n;
            if (stride == 1) {
              const T* xs = xr - padding + kw;
              for (int ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xs[ow];
            } else {
              for (int ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow * stride - padding + kw];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride, int padding,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  const int oh_n = gy.dim(1), ow_n = gy.dim(2);
  const long work = static_cast<long>(cout) * cin * k * k * oh_n * ow_n;

  if (gb) {
    for (int co = 0; co < cout; ++co) {
      const T* g = gy.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
      T s = 0;
      for (int i = 0; i < oh_n * ow_n; ++i) s += g[i];
      (*gb)[co] += s;
    }
  }

  if (gx) {
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int ci = 0; ci < cin; ++ci) {
      T* gxc = gx->data() + static_cast<std::size_t>(ci) * H * W;
      for (int co = 0; co < cout; ++co) {
        const T* gyc = gy.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
        const T* wk = w.data() + (static_cast<std::size_t>(co) * cin + ci) * k * k;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const T wv = wk[kh * k + kw];
            const int ow_lo = range_lo(padding, kw, stride);
            const int ow_hi = range_hi(ow_n, W, padding, kw, stride);
            for (int oh = 0; oh < oh_n; ++oh) {
              const int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              T* gxr = gxc + static_cast<std::size_t>(ih) * W;
              const T* gyr = gyc + static_cast<std::size_t>(oh) * ow_n;
              for (int ow = ow_lo; ow < ow_hi; ++ow) gxr[ow * stride - padding + kw] += wv * gyr[ow];
            }
          }
        }
      }
    }
  }

  if (gw) {
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int co = 0; co < cout; ++co) {
      const T* gyc = gy.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
      for (int ci = 0; ci < cin; ++ci) {
        const T* xc = x.data() + static_cast<std::size_t>(ci) * H * W;
        T* gwk = gw->data() + (static_cast<std::size_t>(co) * cin + ci) * k * k;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const int ow_lo = range_lo(padding, kw, stride);
            const int ow_hi = range_hi(ow_n, W, padding, kw, stride);
            T s = 0;
            for (int oh = 0; oh < oh_n; ++oh) {
              const int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              const T* xr = xc + static_cast<std::size_t>(ih) * W;
              const T* gyr = gyc + static_cast<std::size_t>(oh) * ow_n;
              for (int ow = ow_lo; ow < ow_hi; ++ow) s += gyr[ow] * xr[ow * stride - padding + kw];
            }
            gwk[kh * k + kw] += s;
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                           int padding, int output_padding) {
  check_conv_shapes(x.shape(), w.shape(), 0);
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(1), k = w.dim(2);
  check_bias(bias, cout);
  if (output_padding < 0 || output_padding >= stride) {
    throw ConfigError("conv_transpose2d: output_padding must be in [0, stride)");
  }
  const int oh_n = conv_transpose_out_size(H, k, stride, padding, output_padding);
  const int ow_n = conv_transpose_out_size(W, k, stride, padding, output_padding);
  if (oh_n <= 0 || ow_n <= 0) throw ConfigError("conv_transpose2d: empty output");
  Tensor<T> y({cout, oh_n, ow_n});
  const long work = static_cast<long>(cout) * cin * k * k * H * W;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int co = 0; co < cout; ++co) {
    T* yc = y.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
    const T b = bias.empty() ? T(0) : bias[co];
    std::fill(yc, yc + static_cast<std::size_t>(oh_n) * ow_n, b);
    for (int ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + static_cast<std::size_t>(ci) * H * W;
      const T* wk = w.data() + (static_cast<std::size_t>(ci) * cout + co) * k * k;
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          const T wv = wk[kh * k + kw];
          // valid iw range: 0 <= iw*stride - padding + kw < ow_n
          const int iw_lo = range_lo(padding, kw, stride);
          const int iw_hi = range_hi(W, ow_n, padding, kw, stride);
          for (int ih = 0; ih < H; ++ih) {
            const int oh = ih * stride - padding + kh;
            if (oh < 0 || oh >= oh_n) continue;
            const T* xr = xc + static_cast<std::size_t>(ih) * W;
            T* yr = yc + static_cast<std::size_t>(oh) * ow_n;
            for (int iw = iw_lo; iw < iw_hi; ++iw) yr[iw * stride - padding + kw] += wv * xr[iw];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride,
                               int padding, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(1), k = w.dim(2);
  const int oh_n = gy.dim(1), ow_n = gy.dim(2);
  const long work = static_cast<long>(cout) * cin * k * k * H * W;

  if (gb) {
    for (int co = 0; co < cout; ++co) {
      const T* g = gy.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
      T s = 0;
      for (int i = 0; i < oh_n * ow_n; ++i) s += g[i];
      (*gb)[co] += s;
    }
  }

  if (gx || gw) {
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + static_cast<std::size_t>(ci) * H * W;
      T* gxc = gx ? gx->data() + static_cast<std::size_t>(ci) * H * W : nullptr;
      for (int co = 0; co < cout; ++co) {
        const T* gyc = gy.data() + static_cast<std::size_t>(co) * oh_n * ow_n;
        const T* wk = w.data() + (static_cast<std::size_t>(ci) * cout + co) * k * k;
        T* gwk = gw ? gw->data() + (static_cast<std::size_t>(ci) * cout + co) * k * k : nullptr;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const T wv = wk[kh * k + kw];
            const int iw_lo = range_lo(padding, kw, stride);
            const int iw_hi = range_hi(W, ow_n, padding, kw, stride);
            T s = 0;
            for (int ih = 0; ih < H; ++ih) {
              const int oh = ih * stride - padding + kh;
              if (oh < 0 || oh >= oh_n) continue;
              const T* gyr = gyc + static_cast<std::size_t>(oh) * ow_n;
              const T* xr = xc + static_cast<std::size_t>(ih) * W;
              if (gxc) {
                T* gxr = gxc + static_cast<std::size_t>(ih) * W;
                for (int iw = iw_lo; iw < iw_hi; ++iw) gxr[iw] += wv * gyr[iw * stride - padding + kw];
              }
              for (int iw = iw_lo; iw < iw_hi; ++iw) s += xr[iw] * gyr[iw * stride - padding + kw];
            }
            if (gwk) gwk[kh * k + kw] += s;
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     Tensor<T>* mean, Tensor<T>* rstd) {
  if (x.rank() != 3) throw ConfigError("layer_norm: expected C×H×W input, got " + shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (gamma.size() != static_cast<std::size_t>(C) || beta.size() != static_cast<std::size_t>(C)) {
    throw ConfigError("layer_norm: " + std::to_string(C) + " channels but gamma " + shape_str(gamma.shape()) +
                      ", beta " + shape_str(beta.shape()));
  }
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor<T> y(x.shape());
  if (mean) *mean = Tensor<T>({H, W});
  if (rstd) *rstd = Tensor<T>({H, W});

#pragma omp parallel for schedule(static) if (static_cast<long>(x.size()) > kParallelThreshold)
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::size_t px = static_cast<std::size_t>(i) * W + j;
      T mu = 0;
      for (int c = 0; c < C; ++c) mu += x[c * hw + px];
      mu /= T(C);
      T var = 0;
      for (int c = 0; c < C; ++c) {
        const T d = x[c * hw + px] - mu;
        var += d * d;
      }
      var /= T(C);
      const T rs = T(1) / std::sqrt(var + eps);
      for (int c = 0; c < C; ++c) y[c * hw + px] = gamma[c] * ((x[c * hw + px] - mu) * rs) + beta[c];
      if (mean) (*mean)[px] = mu;
      if (rstd) (*rstd)[px] = rs;
    }
  }
  return y;
}

template <typename T>
void layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& mean,
                         const Tensor<T>& rstd, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>* ggamma,
                         Tensor<T>* gbeta) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t hw = static_cast<std::size_t>(H) * W;

  if (gx) {
#pragma omp parallel for schedule(static) if (static_cast<long>(x.size()) > kParallelThreshold)
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const std::size_t px = static_cast<std::size_t>(i) * W + j;
        const T mu = mean[px], rs = rstd[px];
        T sum_g = 0, sum_gx = 0;
        for (int c = 0; c < C; ++c) {
          const T g = gy[c * hw + px] * gamma[c];
          const T xh = (x[c * hw + px] - mu) * rs;
          sum_g += g;
          sum_gx += g * xh;
        }
        sum_g /= T(C);
        sum_gx /= T(C);
        for (int c = 0; c < C; ++c) {
          const T g = gy[c * hw + px] * gamma[c];
          const T xh = (x[c * hw + px] - mu) * rs;
          (*gx)[c * hw + px] += rs * (g - sum_g - xh * sum_gx);
        }
      }
    }
  }
  if (ggamma || gbeta) {
    for (int c = 0; c < C; ++c) {
      T sg = 0, sb = 0;
      for (std::size_t px = 0; px < hw; ++px) {
        const T g = gy[c * hw + px];
        sg += g * (x[c * hw + px] - mean[px]) * rstd[px];
        sb += g;
      }
      if (ggamma) (*ggamma)[c] += sg;
      if (gbeta) (*gbeta)[c] += sb;
    }
  }
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& bias, int p) {
  check_window(p);
  require_same_shape(q.shape(), k.shape(), "window_attention q/k");
  if (q.rank() != 3) throw ConfigError("window_attention: expected L×H×W features, got " + shape_str(q.shape()));
  const int P2 = p * p;
  if (bias.size() != static_cast<std::size_t>(P2)) {
    throw ConfigError("window_attention: bias has " + std::to_string(bias.size()) + " entries, expected " +
                      std::to_string(P2));
  }
  const int L = q.dim(0), H = q.dim(1), W = q.dim(2), r = p / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::vector<T> qp = to_pixel_major(q), kp = to_pixel_major(k);
  Tensor<T> attn({P2, H, W});
  const long work = static_cast<long>(hw) * P2 * L;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int i = 0; i < H; ++i) {
    std::vector<T> score(P2);
    for (int j = 0; j < W; ++j) {
      const std::size_t px = static_cast<std::size_t>(i) * W + j;
      const T* qv = qp.data() + px * L;
      T mx = -std::numeric_limits<T>::infinity();
      for (int dy = -r; dy <= r; ++dy) {
        const int ni = i + dy;
        for (int dx = -r; dx <= r; ++dx) {
          const int t = (dy + r) * p + (dx + r);
          const int nj = j + dx;
          if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
          const T* kv = kp.data() + (static_cast<std::size_t>(ni) * W + nj) * L;
          T s = bias[t];
          for (int c = 0; c < L; ++c) s += qv[c] * kv[c];
          score[t] = s;
          mx = std::max(mx, s);
        }
      }
      T z = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int ni = i + dy;
        for (int dx = -r; dx <= r; ++dx) {
          const int t = (dy + r) * p + (dx + r);
          const int nj = j + dx;
          if (ni < 0 || ni >= H || nj < 0 || nj >= W) {
            score[t] = 0;
            continue;
          }
          score[t] = std::exp(score[t] - mx);
          z += score[t];
        }
      }
      const T inv = T(1) / z;
      for (int t = 0; t < P2; ++t) attn[t * hw + px] = score[t] * inv;
    }
  }
  return attn;
}

template <typename T>
void window_attention_backward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& attn,
                               const Tensor<T>& gattn, int p, Tensor<T>* gq, Tensor<T>* gk, Tensor<T>* gbias) {
  const int L = q.dim(0), H = q.dim(1), W = q.dim(2), r = p / 2, P2 = p * p;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const long work = static_cast<long>(hw) * P2 * L;

  // Softmax backward: dz_t = a_t (dA_t - sum_s a_s dA_s). Out-of-bounds a_t are 0.
  std::vector<T> dz(static_cast<std::size_t>(P2) * hw);
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::size_t px = static_cast<std::size_t>(i) * W + j;
      T dot = 0;
      for (int t = 0; t < P2; ++t) dot += attn[t * hw + px] * gattn[t * hw + px];
      for (int t = 0; t < P2; ++t) dz[t * hw + px] = attn[t * hw + px] * (gattn[t * hw + px] - dot);
    }
  }

  if (gbias) {
    std::vector<T> rows(static_cast<std::size_t>(P2) * H, T(0));
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int i = 0; i < H; ++i) {
      for (int t = 0; t < P2; ++t) {
        T s = 0;
        const T* d = dz.data() + t * hw + static_cast<std::size_t>(i) * W;
        for (int j = 0; j < W; ++j) s += d[j];
        rows[static_cast<std::size_t>(t) * H + i] = s;
      }
    }
    for (int t = 0; t < P2; ++t) {
      T s = 0;
      for (int i = 0; i < H; ++i) s += rows[static_cast<std::size_t>(t) * H + i];
      (*gbias)[t] += s;
    }
  }

  if (!gq && !gk) return;
  const std::vector<T> qp = to_pixel_major(q), kp = to_pixel_major(k);
  std::vector<T> gqp(gq ? qp.size() : 0), gkp(gk ? kp.size() : 0);

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::size_t px = static_cast<std::size_t>(i) * W + j;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int t = (dy + r) * p + (dx + r);
          if (gq) {
            // dQ(x) = sum_t dz(t, x) K(x + off_t)
            const int ni = i + dy, nj = j + dx;
            if (ni >= 0 && ni < H && nj >= 0 && nj < W) {
              const T g = dz[t * hw + px];
              const T* kv = kp.data() + (static_cast<std::size_t>(ni) * W + nj) * L;
              T* out = gqp.data() + px * L;
              for (int c = 0; c < L; ++c) out[c] += g * kv[c];
            }
          }
          if (gk) {
            // dK(y) = sum_t dz(t, y - off_t) Q(y - off_t)
            const int si = i - dy, sj = j - dx;
            if (si >= 0 && si < H && sj >= 0 && sj < W) {
              const std::size_t spx = static_cast<std::size_t>(si) * W + sj;
              const T g = dz[t * hw + spx];
              const T* qv = qp.data() + spx * L;
              T* out = gkp.data() + px * L;
              for (int c = 0; c < L; ++c) out[c] += g * qv[c];
            }
          }
        }
      }
    }
  }
  if (gq) from_pixel_major_add(gqp, gq);
  if (gk) from_pixel_major_add(gkp, gk);
}

template <typename T>
Tensor<T> window_aggregate(const Tensor<T>& attn, const Tensor<T>& field, int p) {
  check_window(p);
  if (field.rank() != 2 || attn.rank() != 3 || attn.dim(0) != p * p || attn.dim(1) != field.dim(0) ||
      attn.dim(2) != field.dim(1)) {
    throw ConfigError("window_aggregate: attention " + shape_str(attn.shape()) + " incompatible with field " +
                      shape_str(field.shape()) + " for p=" + std::to_string(p));
  }
  const int H = field.dim(0), W = field.dim(1), r = p / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor<T> out({H, W});
  const long work = static_cast<long>(hw) * p * p;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::size_t px = static_cast<std::size_t>(i) * W + j;
      T s = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int ni = i + dy;
        if (ni < 0 || ni >= H) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int nj = j + dx;
          if (nj < 0 || nj >= W) continue;
          const int t = (dy + r) * p + (dx + r);
          s += attn[t * hw + px] * field[static_cast<std::size_t>(ni) * W + nj];
        }
      }
      out[px] = s;
    }
  }
  return out;
}

template <typename T>
void window_aggregate_backward(const Tensor<T>& attn, const Tensor<T>& field, const Tensor<T>& gy, int p,
                               Tensor<T>* gattn, Tensor<T>* gfield) {
  const int H = field.dim(0), W = field.dim(1), r = p / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const long work = static_cast<long>(hw) * p * p;

#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::size_t px = static_cast<std::size_t>(i) * W + j;
      T gf = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int t = (dy + r) * p + (dx + r);
          if (gattn) {
            const int ni = i + dy, nj = j + dx;
            if (ni >= 0 && ni < H && nj >= 0 && nj < W) {
              (*gattn)[t * hw + px] += gy[px] * field[static_cast<std::size_t>(ni) * W + nj];
            }
          }
          if (gfield) {
            const int si = i - dy, sj = j - dx;
            if (si >= 0 && si < H && sj >= 0 && sj < W) {
              const std::size_t spx = static_cast<std::size_t>(si) * W + sj;
              gf += gy[spx] * attn[t * hw + spx];
            }
          }
        }
      }
      if (gfield) (*gfield)[px] += gf;
    }
  }
}

#define SDR_INSTANTIATE_KERNELS(T)                                                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);               \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, Tensor<T>*, \
                                Tensor<T>*, Tensor<T>*);                                                    \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, int); \
  template void conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int,   \
                                          Tensor<T>*, Tensor<T>*, Tensor<T>*);                              \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T, Tensor<T>*,        \
                                Tensor<T>*);                                                                \
  template void layer_norm_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                    const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);                  \
  template Tensor<T> window_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);           \
  template void window_attention_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                          const Tensor<T>&, int, Tensor<T>*, Tensor<T>*, Tensor<T>*);       \
  template Tensor<T> window_aggregate(const Tensor<T>&, const Tensor<T>&, int);                             \
  template void window_aggregate_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,        \
                                          Tensor<T>*, Tensor<T>*);

SDR_INSTANTIATE_KERNELS(float)
SDR_INSTANTIATE_KERNELS(double)

}  // namespace sdr::kernels
