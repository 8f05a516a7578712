#pragma once

#include <cmath>

#include "sdr/rng.hpp"
#include "sdr/tensor.hpp"

namespace sdr::ad {

// Uniform in ±sqrt(1/fan_in), the default for conv and projection weights.
template <typename T>
Tensor<T> uniform_fan_in(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace sdr::ad
