#pragma once

#include <optional>
#include <string>

#include "sdr/engine/tape.hpp"
#include "sdr/tensor.hpp"

namespace sdr::objectives {

// A ground-truth pixel is valid iff gt > 0.

/// mean over valid pixels of |pred - gt| + (pred - gt)^2.
template <typename T>
ad::Var<T> loss_l1l2(const ad::Var<T>& pred, const Tensor<T>& gt);

inline constexpr double kSilogAlpha = 10.0;
inline constexpr double kSilogLambda = 0.85;
inline constexpr double kSilogMinDepth = 1e-6;

/// alpha * sqrt(mean(e^2) - lambda * mean(e)^2), e = log(max(pred, 1e-6)) - log(gt).
/// clamped_count, when given, receives the number of valid predictions that were clamped.
template <typename T>
ad::Var<T> loss_silog(const ad::Var<T>& pred, const Tensor<T>& gt, double alpha = kSilogAlpha,
                      double lambda = kSilogLambda, std::size_t* clamped_count = nullptr);

enum class Units { Meters, Millimeters };

Units parse_units(const std::string& s);
std::string to_string(Units u);

struct MetricReport {
  double rmse = 0;    // m or mm
  double rel = 0;
  double delta1 = 0;  // percent, k = 1.25
  double delta2 = 0;  // k = 1.25^2
  double delta3 = 0;  // k = 1.25^3
  double mae = 0;     // m or mm
  double irmse = 0;   // 1/km
  double imae = 0;    // 1/km
  std::size_t valid_count = 0;
  Units units = Units::Meters;

  // "rmse=... rel=... d1=... ..." on one line.
  std::string to_record() const;
};

struct MetricOptions {
  Units units = Units::Meters;
  // Table-style normalization (1/N)·sqrt(sum) instead of sqrt(mean).
  bool literal_root_normalization = false;
};

/// All metrics over pixels with gt > 0, further restricted to region > 0 when given.
MetricReport compute_metrics(const Tensor<float>& pred, const Tensor<float>& gt, const MetricOptions& opts = {},
                             const Tensor<float>* region = nullptr);

/// Average of per-scene reports (valid_count summed).
MetricReport average(const std::vector<MetricReport>& reports);

}  // namespace sdr::objectives
