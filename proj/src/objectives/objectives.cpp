#include "sdr/objectives/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace sdr::objectives {
namespace {

template <typename T>
std::size_t count_valid(const Tensor<T>& gt) {
  std::size_t n = 0;
  for (T v : gt.vec()) n += v > T(0);
  return n;
}

}  // namespace

template <typename T>
ad::Var<T> loss_l1l2(const ad::Var<T>& pred, const Tensor<T>& gt) {
  require_same_shape(pred.shape(), gt.shape(), "loss_l1l2");
  const std::size_t n = count_valid(gt);
  if (n == 0) throw DataError("loss_l1l2: ground truth has no valid pixels");
  const auto& p = pred.value();
  T s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(gt[i] > T(0))) continue;
    const T d = p[i] - gt[i];
    s += std::abs(d) + d * d;
  }
  const T inv_n = T(1) / static_cast<T>(n);
  return pred.tape().make("loss_l1l2", Tensor<T>({1}, s * inv_n), {pred}, [gt, inv_n](ad::Node<T>& node) {
    auto* g = node.input_grad(0);
    if (!g) return;
    const auto& p = node.inputs[0]->value;
    const T up = node.grad[0] * inv_n;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!(gt[i] > T(0))) continue;
      const T d = p[i] - gt[i];
      const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      (*g)[i] += up * (sign + T(2) * d);
    }
  });
}

template <typename T>
ad::Var<T> loss_silog(const ad::Var<T>& pred, const Tensor<T>& gt, double alpha, double lambda,
                      std::size_t* clamped_count) {
  require_same_shape(pred.shape(), gt.shape(), "loss_silog");
  const std::size_t n = count_valid(gt);
  if (n == 0) throw DataError("loss_silog: ground truth has no valid pixels");
  const auto& p = pred.value();
  const T floor_v = static_cast<T>(kSilogMinDepth);
  std::vector<T> e(p.size(), T(0));
  std::size_t clamped = 0;
  double s1 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(gt[i] > T(0))) continue;
    T v = p[i];
    if (v < floor_v) {
      v = floor_v;
      ++clamped;
    }
    // log of the ratio keeps e unchanged under exact common rescaling
    e[i] = std::log(v / gt[i]);
    s1 += e[i];
  }
  if (clamped_count) *clamped_count = clamped;
  const double mean_e = s1 / n;
  // mean(e^2) - lambda mean(e)^2, written as a centered second moment so the
  // lambda = 1 case does not cancel catastrophically.
  double centered = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(gt[i] > T(0))) continue;
    const double c = e[i] - mean_e;
    centered += c * c;
  }
  double radicand = centered / n + (1.0 - lambda) * mean_e * mean_e;
  if (radicand < -1e-12) throw NumericError("loss_silog: negative radicand " + std::to_string(radicand));
  if (radicand < 0) radicand = 0;
  const double root = std::sqrt(radicand);
  const T value = static_cast<T>(alpha * root);

  return pred.tape().make("loss_silog", Tensor<T>({1}, value), {pred},
                          [gt, e = std::move(e), n, mean_e, root, alpha, lambda, floor_v](ad::Node<T>& node) {
                            auto* g = node.input_grad(0);
                            // Zero subgradient at the sqrt kink.
                            if (!g || root <= 0) return;
                            const auto& p = node.inputs[0]->value;
                            const double up = node.grad[0] * alpha / (2.0 * root);
                            for (std::size_t i = 0; i < p.size(); ++i) {
                              if (!(gt[i] > T(0)) || p[i] < floor_v) continue;
                              // d radicand / d e_i = 2 e_i / n - 2 lambda mean_e / n
                              const double dr = (2.0 * e[i] - 2.0 * lambda * mean_e) / n;
                              (*g)[i] += static_cast<T>(up * dr / p[i]);
                            }
                          });
}

Units parse_units(const std::string& s) {
  if (s == "m" || s == "meters") return Units::Meters;
  if (s == "mm" || s == "millimeters") return Units::Millimeters;
  throw ConfigError("unknown metric units '" + s + "' (expected m or mm)");
}

std::string to_string(Units u) { return u == Units::Meters ? "m" : "mm"; }

std::string MetricReport::to_record() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "rmse=%.6f rel=%.6f d1=%.4f d2=%.4f d3=%.4f mae=%.6f irmse=%.6f imae=%.6f units=%s valid=%zu", rmse,
                rel, delta1, delta2, delta3, mae, irmse, imae, to_string(units).c_str(), valid_count);
  return buf;
}

MetricReport compute_metrics(const Tensor<float>& pred, const Tensor<float>& gt, const MetricOptions& opts,
                             const Tensor<float>* region) {
  require_same_shape(pred.shape(), gt.shape(), "compute_metrics");
  if (region) require_same_shape(region->shape(), gt.shape(), "compute_metrics region");
  double se = 0, ae = 0, rel = 0, ise = 0, iae = 0;
  std::size_t n = 0, d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0f)) continue;
    if (region && !((*region)[i] > 0.0f)) continue;
    const double d = gt[i], p = pred[i];
    const double err = p - d;
    se += err * err;
    ae += std::abs(err);
    rel += std::abs(err) / d;
    const double ip = p > 0 ? 1.0 / p : 0.0;
    const double ierr = ip - 1.0 / d;
    ise += ierr * ierr;
    iae += std::abs(ierr);
    const double ratio = p > 0 ? std::max(p / d, d / p) : INFINITY;
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    ++n;
  }
  if (n == 0) throw DataError("compute_metrics: no valid pixels");
  const double nn = static_cast<double>(n);
  const double length_scale = opts.units == Units::Millimeters ? 1000.0 : 1.0;
  MetricReport r;
  r.units = opts.units;
  r.valid_count = n;
  r.rmse = length_scale * (opts.literal_root_normalization ? std::sqrt(se) / nn : std::sqrt(se / nn));
  r.mae = length_scale * ae / nn;
  r.rel = rel / nn;
  r.irmse = 1000.0 * (opts.literal_root_normalization ? std::sqrt(ise) / nn : std::sqrt(ise / nn));
  r.imae = 1000.0 * iae / nn;
  r.delta1 = 100.0 * d1 / nn;
  r.delta2 = 100.0 * d2 / nn;
  r.delta3 = 100.0 * d3 / nn;
  return r;
}

MetricReport average(const std::vector<MetricReport>& reports) {
  MetricReport out;
  if (reports.empty()) return out;
  out.units = reports.front().units;
  for (const auto& r : reports) {
    out.rmse += r.rmse;
    out.rel += r.rel;
    out.delta1 += r.delta1;
    out.delta2 += r.delta2;
    out.delta3 += r.delta3;
    out.mae += r.mae;
    out.irmse += r.irmse;
    out.imae += r.imae;
    out.valid_count += r.valid_count;
  }
  const double n = static_cast<double>(reports.size());
  out.rmse /= n;
  out.rel /= n;
  out.delta1 /= n;
  out.delta2 /= n;
  out.delta3 /= n;
  out.mae /= n;
  out.irmse /= n;
  out.imae /= n;
  return out;
}

template ad::Var<float> loss_l1l2(const ad::Var<float>&, const Tensor<float>&);
template ad::Var<double> loss_l1l2(const ad::Var<double>&, const Tensor<double>&);
template ad::Var<float> loss_silog(const ad::Var<float>&, const Tensor<float>&, double, double, std::size_t*);
template ad::Var<double> loss_silog(const ad::Var<double>&, const Tensor<double>&, double, double, std::size_t*);

}  // namespace sdr::objectives
