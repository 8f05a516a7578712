#pragma once

#include "sdr/tensor.hpp"

namespace sdr {

/// Affine standardization (d - center) / scale applied to depth-valued
/// inputs of learned layers. The default is the identity.
struct DepthNorm {
  double center = 0.0;
  double scale = 1.0;

  /// center = scale = mean of the positive entries of ref; identity if none.
  template <typename T>
  static DepthNorm from(const Tensor<T>& ref) {
    double s = 0;
    std::size_t n = 0;
    for (T v : ref.vec()) {
      if (v > T(0)) {
        s += static_cast<double>(v);
        ++n;
      }
    }
    if (n == 0) return {};
    const double mean = s / static_cast<double>(n);
    return {mean, mean};
  }
  double apply(double d) const { return (d - center) / scale; }
  bool operator==(const DepthNorm&) const = default;
};

}  // namespace sdr
