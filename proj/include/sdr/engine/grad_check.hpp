#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "sdr/engine/tape.hpp"

namespace sdr::ad {

// Builds a scalar loss from the given parameters on the given tape.
using Objective = std::function<Var<double>(Tape<double>&, const ParamSet<double>&)>;

struct GradCheckOptions {
  double eps = 1e-4;
  int max_coords_per_param = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  int coords_checked = 0;
};

/// Compares tape gradients with central differences on up to
/// max_coords_per_param seeded coordinates per parameter. The error of a
/// coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const Objective& f, const ParamSet<double>& params, const GradCheckOptions& opts = {});

}  // namespace sdr::ad
